#include <gtest/gtest.h>
#include <httplib.h>

#include <fstream>
#include <thread>

#include "persuade/http_api.hpp"
#include "persuade/session_service.hpp"
#include "support.hpp"

namespace persuade {
namespace {

using testing::make_scenario;
using testing::TempDir;

std::map<std::string, Scenario> scenario_map() {
  std::map<std::string, Scenario> m;
  for (const char* id : {"c1", "c2"}) m[id] = make_scenario(id, "Health");
  return m;
}

KnowledgeBase kb() {
  return KnowledgeBase({{"Authority", "Cite experts."}}, {{{"Authority", "Health"}, 4}});
}

/// Fake clock the tests can move.
struct ManualClock {
  std::chrono::steady_clock::time_point t{};
  SessionService::Clock fn() {
    return [this] { return t; };
  }
};

int status_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.http_status();
  }
  return 0;
}

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ServiceError& e) {
    return e.code();
  }
  return "";
}

/// True when the JSON text mentions anything that would unblind the session.
bool leaks(const json& view) {
  const std::string s = view.dump();
  return s.find("Authority") != std::string::npos || s.find("baseline") != std::string::npos ||
         s.find("metacognitive") != std::string::npos || s.find("\"arm\"") != std::string::npos;
}

TEST(Sessions, ChatFlowUntilAccepted) {
  ScriptedBackend b;
  testing::script_defaults(b);
  testing::script_accept(b, "c1", 2);
  SessionService svc(scenario_map(), kb(), b, ServiceConfig{});
  EXPECT_EQ(svc.list_scenarios()["scenarios"].size(), 2u);

  const json created = svc.create_session("c1", ArmPolicy::kMetacognitive);
  const std::string id = created["session_id"];
  EXPECT_EQ(created["status"], "awaiting_human");
  ASSERT_EQ(created["messages"].size(), 1u);
  EXPECT_EQ(created["messages"][0]["speaker"], "persuader");
  EXPECT_FALSE(leaks(created));

  const json t1 = svc.post_turn(id, "Not sure.");
  EXPECT_EQ(t1["status"], "awaiting_human");
  EXPECT_EQ(t1["messages"].size(), 3u);
  EXPECT_FALSE(leaks(t1));

  const json t2 = svc.post_turn(id, "Okay, tell me more.");
  EXPECT_EQ(t2["status"], "finished");
  EXPECT_EQ(t2["outcome"]["success"], true);
  EXPECT_EQ(t2["outcome"]["success_turn"], 2);
  EXPECT_FALSE(leaks(t2));
  EXPECT_FALSE(leaks(svc.get_session(id)));

  const json revealed = svc.get_session(id, true);
  EXPECT_EQ(revealed["reveal"]["arm"], "metacognitive");
  EXPECT_EQ(revealed["reveal"]["meta_strategy"], "Authority");

  const auto records = svc.finished_records();
  ASSERT_EQ(records.size(), 1u);
  EXPECT_EQ(records[0].persuadee_source, PersuadeeSource::kExternal);
  EXPECT_EQ(records[0].transcript.utterances()[1].text, "Not sure.");
  EXPECT_TRUE(check_record_invariants(records[0]).empty());
}

TEST(Sessions, BaselineArmHasNoMetaStrategy) {
  ScriptedBackend b;
  testing::script_defaults(b);
  ServiceConfig cfg;
  cfg.episode.t_max = 1;
  SessionService svc(scenario_map(), kb(), b, cfg);
  const std::string id = svc.create_session("c2", ArmPolicy::kBaseline)["session_id"];
  const json done = svc.post_turn(id, "No.");
  EXPECT_EQ(done["status"], "finished");
  EXPECT_EQ(done["outcome"]["success"], false);
  const json revealed = svc.get_session(id, true);
  EXPECT_EQ(revealed["reveal"]["arm"], "baseline");
  EXPECT_TRUE(revealed["reveal"]["meta_strategy"].is_null());
}

TEST(Sessions, InputAndStateErrors) {
  ScriptedBackend b;
  testing::script_defaults(b);
  ServiceConfig cfg;
  cfg.max_input_chars = 10;
  cfg.episode.t_max = 1;
  SessionService svc(scenario_map(), kb(), b, cfg);
  EXPECT_EQ(status_of([&] { svc.create_session("nope"); }), 404);
  const std::string id = svc.create_session("c1")["session_id"];
  EXPECT_EQ(status_of([&] { svc.post_turn(id, std::string(11, 'x')); }), 413);
  EXPECT_EQ(status_of([&] { svc.post_turn(id, "   "); }), 400);
  EXPECT_EQ(status_of([&] { svc.get_session(id, true); }), 409);
  EXPECT_EQ(status_of([&] { svc.get_session("s-missing"); }), 404);
  svc.post_turn(id, "No.");
  EXPECT_EQ(code_of([&] { svc.post_turn(id, "Again."); }), "invalid_state");
}

TEST(Sessions, BackendFailureEndsSession) {
  ScriptedBackend empty;
  SessionService broken(scenario_map(), kb(), empty, ServiceConfig{});
  EXPECT_EQ(code_of([&] { broken.create_session("c1"); }), "backend_failure");
}

TEST(Sessions, IdleSessionsExpire) {
  ScriptedBackend b;
  testing::script_defaults(b);
  ManualClock clock;
  ServiceConfig cfg;
  cfg.idle_timeout = std::chrono::seconds(60);
  SessionService svc(scenario_map(), kb(), b, cfg, clock.fn());
  const std::string id = svc.create_session("c1")["session_id"];
  clock.t += std::chrono::seconds(30);
  EXPECT_EQ(svc.expire_idle(), 0u);
  clock.t += std::chrono::seconds(31);
  EXPECT_EQ(svc.expire_idle(), 1u);
  const json v = svc.get_session(id);
  EXPECT_EQ(v["status"], "finished");
  EXPECT_EQ(v["outcome"]["success"], false);
  EXPECT_EQ(status_of([&] { svc.post_turn(id, "late"); }), 409);
  ASSERT_EQ(svc.finished_records().size(), 1u);
  EXPECT_TRUE(svc.finished_records()[0].aborted());
}

TEST(Sessions, FinishedSessionsPersist) {
  ScriptedBackend b;
  testing::script_defaults(b);
  TempDir dir;
  ServiceConfig cfg;
  cfg.episode.t_max = 1;
  cfg.data_dir = dir.path();
  SessionService svc(scenario_map(), kb(), b, cfg);
  const std::string id = svc.create_session("c1")["session_id"];
  svc.post_turn(id, "No.");
  const auto path = dir / ("sessions/" + id + ".json");
  ASSERT_TRUE(std::filesystem::exists(path));
  EXPECT_EQ(record_from_json(read_json_file(path)).scenario_id, "c1");
}

Transcript line(const std::string& persuader, const std::string& persuadee) {
  Transcript t;
  t.append({Speaker::kPersuader, 1, persuader});
  t.append({Speaker::kPersuadee, 1, persuadee});
  return t;
}

std::vector<AnnotationTask> three_tasks() {
  std::vector<AnnotationTask> out;
  for (int i = 0; i < 3; ++i) {
    out.push_back({"t" + std::to_string(i), "c1", line("BASE", "meh"), line("TREAT", "sure"),
                   AbOutcome::kWin});
  }
  return out;
}

TEST(Annotation, BlindRoundTripAndAgreement) {
  ScriptedBackend b;
  TempDir dir;
  ServiceConfig cfg;
  cfg.data_dir = dir.path();
  SessionService svc(scenario_map(), kb(), b, cfg);
  svc.add_tasks(three_tasks());
  int served = 0;
  while (true) {
    const json next = svc.next_annotation("ann1");
    if (next["done"]) break;
    ++served;
    EXPECT_FALSE(leaks(next));
    const bool treatment_first = next["dialogue_1"][0]["text"] == "TREAT";
    // The rater always prefers the treatment dialogue.
    svc.submit_verdict(next["task_id"], "ann1", treatment_first ? "Dialogue 1" : "dialogue2");
  }
  EXPECT_EQ(served, 3);
  for (const auto& j : svc.judgments()) {
    EXPECT_EQ(j.outcome, AbOutcome::kWin);
    EXPECT_EQ(j.rater, "human:ann1");
  }
  const json agreement = svc.agreement();
  ASSERT_EQ(agreement["subsets"].size(), 1u);
  EXPECT_EQ(agreement["subsets"][0]["n"], 3);
  EXPECT_EQ(agreement["subsets"][0]["degenerate"], true);
  EXPECT_DOUBLE_EQ(agreement["mean_kappa"].get<double>(), 1.0);

  std::ifstream in(dir / "judgments.jsonl");
  int lines = 0;
  for (std::string s; std::getline(in, s);) ++lines;
  EXPECT_EQ(lines, 3);
}

TEST(Annotation, VerdictErrors) {
  ScriptedBackend b;
  SessionService svc(scenario_map(), kb(), b, ServiceConfig{});
  svc.add_tasks(three_tasks());
  const std::string task = svc.next_annotation("r")["task_id"];
  EXPECT_EQ(status_of([&] { svc.submit_verdict(task, "r", "maybe"); }), 400);
  EXPECT_EQ(status_of([&] { svc.submit_verdict("t9", "r", "tie"); }), 404);
  EXPECT_EQ(status_of([&] { svc.submit_verdict(task, "other", "tie"); }), 404);
  svc.submit_verdict(task, "r", "tie");
  EXPECT_EQ(status_of([&] { svc.submit_verdict(task, "r", "tie"); }), 409);
  EXPECT_TRUE(svc.agreement()["mean_kappa"].is_number());
}

TEST(Annotation, DisplayedVerdictWords) {
  EXPECT_EQ(parse_displayed_verdict("Dialogue 1"), AbVerdict::kDialogue1);
  EXPECT_EQ(parse_displayed_verdict("better"), AbVerdict::kDialogue2);
  EXPECT_EQ(parse_displayed_verdict("worse"), AbVerdict::kDialogue1);
  EXPECT_EQ(parse_displayed_verdict("Comparable"), AbVerdict::kTie);
  EXPECT_FALSE(parse_displayed_verdict("maybe").has_value());
}

TEST(Annotation, TasksJsonRoundTrip) {
  const auto tasks = three_tasks();
  const auto back = annotation_tasks_from_json(annotation_tasks_to_json(tasks));
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[1].treatment, tasks[1].treatment);
  EXPECT_EQ(back[1].llm_outcome, AbOutcome::kWin);
  EXPECT_THROW(annotation_tasks_from_json(json::array()), Error);
}

/// Routes mounted on a loopback port for the duration of a test.
class LocalServer {
 public:
  LocalServer(SessionService& svc, HttpOptions opts) {
    mount_routes(server_, svc, opts);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

TEST(Http, SessionAndAnnotationRoutes) {
  ScriptedBackend b;
  testing::script_defaults(b);
  testing::script_accept(b, "c2", 1);
  SessionService svc(scenario_map(), kb(), b, ServiceConfig{});
  svc.add_tasks(three_tasks());
  HttpOptions opts;
  opts.rater_token = "tok";
  opts.max_body_bytes = 4096;
  LocalServer server(svc, opts);
  auto cli = server.client();

  auto r = cli.Get("/v1/scenarios");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["scenarios"].size(), 2u);

  r = cli.Post("/v1/sessions", R"({"scenario_id": "c2"})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 201);
  const std::string id = json::parse(r->body)["session_id"];

  r = cli.Post("/v1/sessions", R"({"scenario_id": "zz"})", "application/json");
  EXPECT_EQ(r->status, 404);
  EXPECT_EQ(json::parse(r->body)["error"]["code"], "not_found");

  r = cli.Post("/v1/sessions", "not json", "application/json");
  EXPECT_EQ(r->status, 400);

  r = cli.Post(("/v1/sessions/" + id + "/turns").c_str(), std::string(5000, 'x'), "application/json");
  EXPECT_EQ(r->status, 413);

  r = cli.Post(("/v1/sessions/" + id + "/turns").c_str(), R"({"text": "Sounds good."})",
               "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["status"], "finished");

  r = cli.Get(("/v1/sessions/" + id + "?reveal=true").c_str());
  EXPECT_EQ(r->status, 200);
  EXPECT_TRUE(json::parse(r->body).contains("reveal"));

  r = cli.Get("/v1/annotations/next?rater=a");
  EXPECT_EQ(r->status, 401);
  httplib::Headers auth{{"X-Rater-Token", "tok"}};
  r = cli.Get("/v1/annotations/next?rater=a", auth);
  ASSERT_EQ(r->status, 200);
  const std::string task = json::parse(r->body)["task_id"];
  r = cli.Post(("/v1/annotations/" + task + "/verdict").c_str(), auth,
               R"({"rater": "a", "verdict": "tie"})", "application/json");
  EXPECT_EQ(r->status, 201);
  r = cli.Post(("/v1/annotations/" + task + "/verdict").c_str(), auth,
               R"({"rater": "a", "verdict": "tie"})", "application/json");
  EXPECT_EQ(r->status, 409);
  r = cli.Get("/v1/reports/agreement", auth);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(json::parse(r->body)["subsets"].size(), 1u);

  r = cli.Get("/v1/nowhere");
  EXPECT_EQ(r->status, 404);
}

}  // namespace
}  // namespace persuade
