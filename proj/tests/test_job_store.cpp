#include <doctest.h>

#include "docpipe/job_store.hpp"
#include "support.hpp"

using namespace docpipe;

namespace {

JobRecord record(std::string id) {
  JobRecord r;
  r.job_id = std::move(id);
  r.packet_id = "p";
  r.packet_path = "/tmp/p.json";
  r.config_hash = "h";
  r.created_at = "2026-01-01T00:00:00Z";
  return r;
}

}  // namespace

TEST_CASE("stage names") {
  for (Stage s : {Stage::Queued, Stage::Classifying, Stage::Splitting, Stage::Extracting, Stage::Assessing,
                  Stage::AwaitingReview, Stage::Validating, Stage::Complete, Stage::Failed, Stage::DeadLettered})
    CHECK(parse_stage(to_string(s)) == s);
  CHECK(to_string(Stage::AwaitingReview) == "awaiting_review");
  CHECK(is_terminal(Stage::DeadLettered));
  CHECK_FALSE(is_terminal(Stage::AwaitingReview));
  CHECK_THROWS(parse_stage("sleeping"));
}

TEST_CASE("records round trip through the store") {
  support::TempDir dir;
  JobStore store(dir.path());
  JobRecord r = record("job-1");
  r.sequence = store.next_sequence();
  r.attempts["classifying"] = 2;
  store.save(r);
  CHECK(store.exists("job-1"));
  const JobRecord back = store.load("job-1");
  CHECK(back.sequence == r.sequence);
  CHECK(back.attempts.at("classifying") == 2);
  CHECK_FALSE(back.updated_at.empty());
  CHECK(store.list_jobs() == std::vector<std::string>{"job-1"});
  CHECK(store.next_sequence() == r.sequence + 1);
  CHECK_THROWS_AS(store.load("job-2"), JobNotFound);
}

TEST_CASE("corrupt records raise ParseError") {
  support::TempDir dir;
  JobStore store(dir.path());
  JobRecord r = record("job-1");
  store.save(r);
  support::write_file(store.job_dir("job-1") / "record", "{ torn");
  CHECK_THROWS_AS(store.load("job-1"), ParseError);
}

TEST_CASE("stage outputs and dead letters") {
  support::TempDir dir;
  JobStore store(dir.path());
  JobRecord r = record("job-1");
  store.save(r);
  CHECK_FALSE(store.read_output("job-1", "classifying"));
  bool committed = false;
  store.write_output("job-1", "classifying", json{{"labels", {"O"}}}, [&] { committed = true; });
  CHECK(committed);
  CHECK(store.read_output("job-1", "classifying")->at("labels")[0] == "O");
  CHECK(store.output_path("job-1", "classifying").filename() == "stage_classifying.out");

  store.write_dead_letter({"job-1", "extracting", "boom", 3, "t", "/tmp/p.json"});
  const auto dl = store.read_dead_letter("job-1");
  REQUIRE(dl);
  CHECK(dl->at("attempts") == 3);
  CHECK(dl->at("stage") == "extracting");
}

TEST_CASE("events are deduplicated per job and torn lines are skipped") {
  support::TempDir dir;
  JobStore store(dir.path());
  CompletionEvent ev;
  ev.job_id = "job-1";
  ev.status = "complete";
  CHECK(store.append_event(ev));
  CHECK_FALSE(store.append_event(ev));
  ev.job_id = "job-2";
  CHECK(store.append_event(ev));
  {
    std::ofstream out(store.events_log(), std::ios::app);
    out << "{\"job_id\": \"job-3\", \"sta";
  }
  const auto events = store.events();
  REQUIRE(events.size() == 2);
  CHECK(events[1]["job_id"] == "job-2");
}

TEST_CASE("fault hook sees every persistence boundary in order") {
  support::TempDir dir;
  JobStore store(dir.path());
  std::vector<std::string> seen;
  store.set_fault_hook([&](const std::string& b) { seen.push_back(b); });
  JobRecord r = record("job-1");
  store.save(r);
  REQUIRE(seen.size() == 3);
  CHECK(seen[0].rfind("before:", 0) == 0);
  CHECK(seen[1].rfind("written:", 0) == 0);
  CHECK(seen[2].rfind("renamed:", 0) == 0);
}

TEST_CASE("a crash before the rename leaves the old file intact") {
  support::TempDir dir;
  JobStore store(dir.path());
  JobRecord r = record("job-1");
  store.save(r);
  r.stage = Stage::Classifying;
  store.set_fault_hook([](const std::string& b) {
    if (b.rfind("written:", 0) == 0) throw SimulatedCrash(b);
  });
  CHECK_THROWS_AS(store.save(r), SimulatedCrash);
  store.set_fault_hook({});
  CHECK(store.load("job-1").stage == Stage::Queued);
}
