/*
 * Copyright 2026 The Rarefind Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>
#include <httplib.h>

#include <thread>

#include "rarefind/api.hpp"
#include "support.hpp"

namespace rf = rarefind;

namespace {

// A project with one open round (8 items, reviewers r1..r4, two per item)
// served on an ephemeral port.
class HttpTest : public ::testing::Test {
 protected:
  void start(rf::ServiceOptions opts = {}) {
    project_ = rf::Project::open(dir_.path());
    std::vector<rf::Complaint> corpus;
    for (int i = 0; i < 20; ++i) {
      corpus.push_back(rftest::make_complaint("C" + std::to_string(10 + i), "my husband stole item " + std::to_string(i)));
    }
    project_->import_corpus(corpus, rf::CleaningReport::tally(corpus.size(), 0, 0, 0));
    project_->seed_reference({"C10", "C11"});
    std::map<std::string, std::vector<std::string>> a;
    const std::vector<std::string> people = {"r1", "r2", "r3", "r4"};
    for (int i = 0; i < 8; ++i) {
      a["C" + std::to_string(20 + i)] = {people[(2 * i) % 4], people[(2 * i + 1) % 4]};
    }
    project_->open_round(1, rf::RoundKind::kCluster, a);
    service_ = std::make_unique<rf::ReviewService>(*project_, opts);
    rf::install_routes(server_, *service_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }

  void TearDown() override {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(10, 0);
    return c;
  }

  static nlohmann::json body(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

  rftest::TempDir dir_;
  std::unique_ptr<rf::Project> project_;
  std::unique_ptr<rf::ReviewService> service_;
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace

TEST_F(HttpTest, HealthAndCors) {
  start();
  auto c = client();
  auto r = c.Get("/api/v1/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
  EXPECT_EQ(r->get_header_value("Content-Type"), "application/json");
  r = c.Options("/api/v1/labels");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 204);
  EXPECT_NE(r->get_header_value("Access-Control-Allow-Methods").find("POST"), std::string::npos);
}

TEST_F(HttpTest, QueueLabelRoundTrip) {
  start();
  auto c = client();
  auto q = c.Get("/api/v1/rounds/1/queue?reviewer=r1");
  ASSERT_TRUE(q);
  ASSERT_EQ(q->status, 200);
  const auto items = body(q)["items"];
  ASSERT_FALSE(items.empty());
  const auto first = items[0]["complaint_id"].get<std::string>();

  const nlohmann::json label = {{"complaint_id", first}, {"reviewer_id", "r1"}, {"verdict", "relevant"}};
  auto p = c.Post("/api/v1/labels", label.dump(), "application/json");
  ASSERT_TRUE(p);
  EXPECT_EQ(p->status, 201);
  EXPECT_EQ(body(p)["verdict"], "relevant");

  // Durable before the response: a fresh reader sees it.
  auto reader = rf::Project::open(dir_.path(), rf::OpenMode::kReadOnly);
  ASSERT_NE(reader->round(1).label(first, "r1"), nullptr);

  q = c.Get("/api/v1/rounds/1/queue?reviewer=r1");
  EXPECT_EQ(body(q)["items"].size(), items.size() - 1);

  EXPECT_EQ(c.Get("/api/v1/rounds/1/queue?reviewer=nobody")->status, 403);
  EXPECT_EQ(c.Get("/api/v1/rounds/7/queue?reviewer=r1")->status, 404);
  EXPECT_EQ(c.Get("/api/v1/rounds/99999999999999999999")->status, 404);
  auto bad = c.Post("/api/v1/labels", R"({"complaint_id":")", "application/json");
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(body(bad)["error"], "BadRequest");
  auto maybe = c.Post("/api/v1/labels",
                      nlohmann::json{{"complaint_id", first}, {"reviewer_id", "r1"}, {"verdict", "maybe"}}.dump(),
                      "application/json");
  EXPECT_EQ(maybe->status, 422);
  EXPECT_EQ(c.Post("/api/v1/rounds/1/seal", "{", "application/json")->status, 400);
}

TEST_F(HttpTest, ConcurrentReviewersLoseNothing) {
  start();
  const auto& round = project_->round(1);
  std::vector<std::pair<std::string, std::string>> slots;
  for (const auto& [id, rs] : round.assignments) {
    for (const auto& r : rs) slots.emplace_back(id, r);
  }
  std::vector<std::thread> workers;
  std::atomic<int> created{0};
  for (std::size_t w = 0; w < slots.size(); ++w) {
    workers.emplace_back([&, w] {
      auto c = client();
      // Each slot is written three times; the last verdict must win.
      for (const char* v : {"unsure", "not_relevant", "relevant"}) {
        const nlohmann::json label = {{"complaint_id", slots[w].first}, {"reviewer_id", slots[w].second}, {"verdict", v}};
        auto r = c.Post("/api/v1/labels", label.dump(), "application/json");
        if (r && r->status == 201) ++created;
      }
    });
  }
  for (auto& t : workers) t.join();
  EXPECT_EQ(created.load(), static_cast<int>(slots.size() * 3));
  auto reader = rf::Project::open(dir_.path(), rf::OpenMode::kReadOnly);
  for (const auto& [id, r] : slots) {
    const auto* l = reader->round(1).label(id, r);
    ASSERT_NE(l, nullptr);
    EXPECT_EQ(l->verdict, rf::Verdict::kRelevant);
  }
  EXPECT_TRUE(reader->round(1).complete());
}

TEST_F(HttpTest, AdjudicateSealAndDashboard) {
  start();
  auto c = client();
  const auto& round = project_->round(1);
  for (const auto& [id, rs] : round.assignments) {
    for (std::size_t i = 0; i < rs.size(); ++i) {
      const std::string v = id == "C20" && i == 1 ? "not_relevant" : "relevant";
      const nlohmann::json label = {{"complaint_id", id}, {"reviewer_id", rs[i]}, {"verdict", v}};
      ASSERT_EQ(c.Post("/api/v1/labels", label.dump(), "application/json")->status, 201);
    }
  }
  auto d = c.Get("/api/v1/rounds/1/disagreements");
  EXPECT_EQ(body(d)["disagreements"], nlohmann::json({"C20"}));
  EXPECT_EQ(c.Post("/api/v1/rounds/1/seal", "{}", "application/json")->status, 409);
  const nlohmann::json wrong = {{"complaint_id", "C21"}, {"verdict", "relevant"}};
  EXPECT_EQ(c.Post("/api/v1/adjudications", wrong.dump(), "application/json")->status, 409);
  const nlohmann::json adj = {{"complaint_id", "C20"}, {"verdict", "relevant"}};
  EXPECT_EQ(c.Post("/api/v1/adjudications", adj.dump(), "application/json")->status, 201);
  EXPECT_TRUE(body(c.Get("/api/v1/rounds/1/disagreements"))["disagreements"].empty());
  EXPECT_EQ(c.Post("/api/v1/rounds/1/seal", "", "application/json")->status, 200);

  const auto dash = body(c.Get("/api/v1/dashboard"));
  EXPECT_EQ(dash["ref_size_by_version"], nlohmann::json({2, 10}));
  EXPECT_EQ(dash, service_->dashboard().body);
  const auto agreement = body(c.Get("/api/v1/rounds/1/agreement"));
  EXPECT_EQ(agreement["method"], "fleiss");
  EXPECT_EQ(body(c.Get("/api/v1/rounds")), service_->rounds().body);
  EXPECT_EQ(c.Get("/api/v1/clusters?iteration=x")->status, 422);
}

TEST_F(HttpTest, TokenRequiredWhenConfigured) {
  rf::ServiceOptions o;
  o.token = "s3cret";
  o.cors_origin = "http://localhost:5173";
  start(o);
  auto c = client();
  auto r = c.Get("/api/v1/dashboard");
  EXPECT_EQ(r->status, 401);
  EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "http://localhost:5173");
  EXPECT_EQ(c.Options("/api/v1/dashboard")->status, 204);
  httplib::Headers h = {{"X-Rarefind-Token", "s3cret"}};
  EXPECT_EQ(c.Get("/api/v1/dashboard", h)->status, 200);
  httplib::Headers wrong = {{"X-Rarefind-Token", "guess"}};
  EXPECT_EQ(c.Get("/api/v1/dashboard", wrong)->status, 401);
}

TEST_F(HttpTest, ServesUiDirectory) {
  rftest::TempDir ui;
  {
    std::ofstream out(ui / "index.html");
    out << "<html>review</html>";
  }
  rf::ServiceOptions o;
  o.ui_dir = ui.str();
  start(o);
  auto r = client().Get("/index.html");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "<html>review</html>");
}
