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

#include "rarefind/api.hpp"

#include <httplib.h>

#include <algorithm>
#include <set>
#include <stdexcept>

#include "rarefind/agreement.hpp"
#include "rarefind/common.hpp"
#include "rarefind/explain.hpp"

namespace rarefind {

namespace {

int status_for(Errc code) {
  switch (code) {
    case Errc::kUnknownRound:
    case Errc::kUnknownComplaint:
      return 404;
    case Errc::kClosedRound:
    case Errc::kNotDisputed:
    case Errc::kIncompleteRound:
    case Errc::kUnadjudicatedDisputes:
    case Errc::kReadOnly:
    case Errc::kUnfinishedRound:
      return 409;
    case Errc::kInvalidArgument:
      return 422;
    default:
      return 400;
  }
}

ApiResponse error_response(int status, std::string_view name, const std::string& message) {
  return {status, {{"error", name}, {"message", message}}};
}

ApiResponse from_error(const Error& e) { return error_response(status_for(e.code()), e.name(), e.what()); }

std::optional<std::string> string_field(const nlohmann::json& body, const char* key) {
  if (!body.is_object() || !body.contains(key) || !body[key].is_string()) return std::nullopt;
  return body[key].get<std::string>();
}

// Latest cluster-model iteration, if any.
std::optional<int> latest_model(const Project& project) {
  std::optional<int> out;
  for (const auto& rec : load_iterations(project)) {
    if (rec.kind == "cluster") out = rec.model_iteration;
  }
  return out;
}

}  // namespace

ReviewService::ReviewService(Project& project, ServiceOptions options)
    : project_(project), options_(std::move(options)) {}

nlohmann::json ReviewService::item_view(const ReviewRound& round, const std::string& id,
                                        const std::string& reviewer) {
  const Complaint* c = project_.find(id);
  const std::string narrative = c && c->narrative ? *c->narrative : std::string();
  nlohmann::json highlights = nlohmann::json::array();
  if (c && c->has_narrative()) {
    const Lexicon lex = project_.lexicon();
    const TokenizedDoc doc = lex.normalizer().apply(tokenize(narrative, Preset::kLight, id));
    const MatchResult m = KeywordMatcher(lex).match(doc, kUnboundedWindow);
    auto add = [&](const TokenRange& r, const char* kind) {
      const std::size_t b = doc.spans[r.first].begin;
      const std::size_t e = doc.spans[r.last].end;
      highlights.push_back({{"kind", kind},
                            {"start", utf16_offset(narrative, b)},
                            {"end", utf16_offset(narrative, e)},
                            {"byte_start", b},
                            {"byte_end", e}});
    };
    for (const auto& r : m.ip_occurrences) add(r, "ip");
    for (const auto& r : m.abuse_occurrences) add(r, "abuse");
  }

  nlohmann::json cluster = nullptr;
  nlohmann::json terms = nlohmann::json::array();
  if (auto rec = load_iteration(project_, round.iteration); rec && rec->kind == "cluster") {
    if (auto model = project_.get_json(model_path(rec->model_iteration))) {
      const auto& assignments = model->at("assignments");
      if (assignments.contains(id)) {
        const int label = assignments[id].get<int>();
        cluster = label;
        if (auto topics = project_.get_json(topics_path(rec->model_iteration))) {
          for (const auto& p : topics->at("clusters")) {
            if (p.at("cluster").get<int>() != label) continue;
            for (const auto& t : p.at("terms")) terms.push_back(t.at("term"));
          }
        }
      }
    }
  }

  nlohmann::json labels = nlohmann::json::object();
  const auto& reviewers = round.assignments.at(id);
  for (const auto& r : reviewers) {
    const Label* l = round.label(id, r);
    labels[r] = l ? nlohmann::json(verdict_name(l->verdict)) : nlohmann::json();
  }
  const Label* own = reviewer.empty() ? nullptr : round.label(id, reviewer);
  const auto final_verdict = round.final_verdict(id);
  std::string state = "pending";
  if (round.adjudications.count(id)) {
    state = "adjudicated";
  } else if (round.disputed(id)) {
    state = "disputed";
  } else if (final_verdict) {
    state = "agreed";
  } else if (own) {
    state = "awaiting_other_reviewer";
  }
  return {{"complaint_id", id},
          {"narrative", narrative},
          {"highlights", std::move(highlights)},
          {"cluster", cluster},
          {"cluster_terms", std::move(terms)},
          {"iteration", round.iteration},
          {"reviewers", reviewers},
          {"verdict_state",
           {{"state", state},
            {"own", own ? nlohmann::json(verdict_name(own->verdict)) : nlohmann::json()},
            {"labels", std::move(labels)},
            {"final", final_verdict ? nlohmann::json(verdict_name(*final_verdict)) : nlohmann::json()}}}};
}

ApiResponse ReviewService::rounds() {
  std::lock_guard lock(mu_);
  nlohmann::json out = nlohmann::json::array();
  for (const auto& [it, r] : project_.rounds()) {
    std::size_t labeled = 0, slots = 0;
    for (const auto& [id, rs] : r.assignments) {
      for (const auto& rv : rs) {
        ++slots;
        if (r.label(id, rv)) ++labeled;
      }
    }
    out.push_back({{"iteration", it},
                   {"kind", round_kind_name(r.kind)},
                   {"sealed", r.sealed},
                   {"items", r.assignments.size()},
                   {"slots", slots},
                   {"labeled_slots", labeled},
                   {"reviewers", r.reviewers()}});
  }
  return {200, {{"rounds", std::move(out)}}};
}

ApiResponse ReviewService::round(int iteration) {
  std::lock_guard lock(mu_);
  try {
    const ReviewRound& r = project_.round(iteration);
    nlohmann::json items = nlohmann::json::array();
    for (const auto& [id, rs] : r.assignments) items.push_back(item_view(r, id, ""));
    return {200, {{"iteration", iteration},
                  {"kind", round_kind_name(r.kind)},
                  {"sealed", r.sealed},
                  {"reviewers", r.reviewers()},
                  {"items", std::move(items)}}};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse ReviewService::queue(int iteration, const std::string& reviewer) {
  std::lock_guard lock(mu_);
  try {
    const ReviewRound& r = project_.round(iteration);
    const auto people = r.reviewers();
    if (reviewer.empty() || !std::binary_search(people.begin(), people.end(), reviewer)) {
      return error_response(403, "UnassignedReviewer",
                            "reviewer '" + reviewer + "' has no items in round " + std::to_string(iteration));
    }
    nlohmann::json items = nlohmann::json::array();
    std::size_t assigned = 0;
    for (const auto& [id, rs] : r.assignments) {  // map order: complaint_id ascending
      if (!r.is_assigned(id, reviewer)) continue;
      ++assigned;
      if (!r.sealed && !r.label(id, reviewer)) items.push_back(item_view(r, id, reviewer));
    }
    return {200, {{"iteration", iteration},
                  {"reviewer", reviewer},
                  {"sealed", r.sealed},
                  {"assigned", assigned},
                  {"pending", items.size()},
                  {"items", std::move(items)}}};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse ReviewService::post_label(const nlohmann::json& body) {
  std::lock_guard lock(mu_);
  const auto id = string_field(body, "complaint_id");
  const auto reviewer = string_field(body, "reviewer_id");
  const auto verdict_text = string_field(body, "verdict");
  if (!id || !reviewer || !verdict_text) {
    return error_response(422, "InvalidArgument", "complaint_id, reviewer_id and verdict are required strings");
  }
  const auto verdict = parse_verdict(*verdict_text);
  if (!verdict) return error_response(422, "InvalidVerdict", "unknown verdict '" + *verdict_text + "'");

  Label l;
  l.complaint_id = *id;
  l.reviewer_id = *reviewer;
  l.verdict = *verdict;
  try {
    if (body.contains("note") && !body["note"].is_null()) l.note = body["note"].get<std::string>();
    if (body.contains("framework_tags") && !body["framework_tags"].is_null()) {
      l.framework_tags = body["framework_tags"].get<std::set<std::string>>();
    }
  } catch (const nlohmann::json::exception& e) {
    return error_response(422, "InvalidArgument", e.what());
  }

  if (body.contains("iteration") && body["iteration"].is_number_integer()) {
    l.iteration = body["iteration"].get<int>();
  } else {
    // The most recent round that holds this item.
    std::optional<int> found;
    for (const auto& [it, r] : project_.rounds()) {
      if (r.assignments.count(*id)) found = it;
    }
    if (!found) {
      if (!project_.find(*id)) return error_response(404, "UnknownComplaint", "unknown complaint '" + *id + "'");
      return error_response(409, "ClosedRound", "'" + *id + "' is not in any review round");
    }
    l.iteration = *found;
  }

  try {
    const ReviewRound& r = project_.round(l.iteration);
    if (r.sealed) return error_response(409, "ClosedRound", "round " + std::to_string(l.iteration) + " is sealed");
    if (!project_.find(*id)) return error_response(404, "UnknownComplaint", "unknown complaint '" + *id + "'");
    if (!r.is_assigned(*id, *reviewer)) {
      return error_response(403, "UnassignedReviewer",
                            "reviewer '" + *reviewer + "' is not assigned '" + *id + "'");
    }
    const std::size_t offset = project_.append_labels({l});
    const Label* stored = project_.round(l.iteration).label(*id, *reviewer);
    nlohmann::json echo = *stored;
    echo["log_offset"] = offset;
    return {201, echo};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse ReviewService::disagreements(int iteration) {
  std::lock_guard lock(mu_);
  try {
    const ReviewRound& r = project_.round(iteration);
    const auto ids = rarefind::disagreements(r, DisagreementScope::kLabeledOnly);
    nlohmann::json items = nlohmann::json::array();
    for (const auto& id : ids) {
      nlohmann::json verdicts = nlohmann::json::object();
      nlohmann::json notes = nlohmann::json::object();
      for (const auto& rv : r.assignments.at(id)) {
        const Label* l = r.label(id, rv);
        verdicts[rv] = verdict_name(l->verdict);
        if (l->note) notes[rv] = *l->note;
      }
      nlohmann::json view = item_view(r, id, "");
      view["verdicts"] = std::move(verdicts);
      view["notes"] = std::move(notes);
      items.push_back(std::move(view));
    }
    return {200, {{"iteration", iteration},
                  {"disagreements", ids},
                  {"items", std::move(items)},
                  {"pending_slots", r.unlabeled_slots()},
                  {"complete", r.complete()}}};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse ReviewService::post_adjudication(const nlohmann::json& body) {
  std::lock_guard lock(mu_);
  const auto id = string_field(body, "complaint_id");
  const auto verdict_text = string_field(body, "verdict");
  if (!id || !verdict_text) {
    return error_response(422, "InvalidArgument", "complaint_id and verdict are required strings");
  }
  const auto verdict = parse_verdict(*verdict_text);
  if (!verdict) return error_response(422, "InvalidVerdict", "unknown verdict '" + *verdict_text + "'");
  Adjudication a;
  a.complaint_id = *id;
  a.verdict = *verdict;
  if (body.contains("note") && body["note"].is_string()) a.note = body["note"].get<std::string>();
  if (body.contains("iteration") && body["iteration"].is_number_integer()) {
    a.iteration = body["iteration"].get<int>();
  } else if (auto open = project_.open_round_iteration()) {
    a.iteration = *open;
  } else {
    return error_response(409, "ClosedRound", "no open round");
  }
  try {
    project_.adjudicate(a);
    nlohmann::json echo = project_.round(a.iteration).adjudications.at(*id);
    return {201, echo};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse ReviewService::seal(int iteration, const nlohmann::json& body) {
  std::lock_guard lock(mu_);
  const bool force = body.is_object() && body.value("force", false);
  try {
    project_.round(iteration);
    if (load_iteration(project_, iteration)) {
      const IterationRecord rec = seal_iteration(project_, iteration, force);
      return {200, iteration_summary(project_, rec)};
    }
    Project::SealOptions so;
    so.force = force;
    project_.seal_round(iteration, so);
    return {200, {{"iteration", iteration}, {"sealed", true}, {"ref_version", project_.reference().version}}};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse ReviewService::agreement(int iteration) {
  std::lock_guard lock(mu_);
  try {
    nlohmann::json j = round_agreement(project_.round(iteration));
    return {200, j};
  } catch (const Error& e) {
    if (e.code() == Errc::kEmptySample) {
      return {200, {{"iteration", iteration}, {"method", nullptr}, {"entries", nlohmann::json::array()}}};
    }
    return from_error(e);
  }
}

ApiResponse ReviewService::dashboard() {
  std::lock_guard lock(mu_);
  return {200, build_dashboard(project_)};
}

ApiResponse ReviewService::clusters(std::optional<int> iteration) {
  std::lock_guard lock(mu_);
  try {
    std::optional<IterationRecord> rec;
    if (iteration) {
      rec = load_iteration(project_, *iteration);
      if (!rec || rec->kind != "cluster") {
        return error_response(404, "UnknownRound", "no clustering for iteration " + std::to_string(*iteration));
      }
    } else {
      for (auto& r : load_iterations(project_)) {
        if (r.kind == "cluster") rec = std::move(r);
      }
      if (!rec) return {200, {{"iteration", nullptr}, {"clusters", nlohmann::json::array()}}};
    }
    const int mi = rec->model_iteration;
    const auto model_doc = project_.get_json(model_path(mi));
    if (!model_doc) return error_response(404, "UnknownRound", "model missing");
    const ClusterModel model = model_doc->get<ClusterModel>();
    const auto sizes = model.cluster_sizes();
    const auto topics = project_.get_json(topics_path(mi));
    const auto explain = project_.get_json(explain_path(mi));

    nlohmann::json clusters = nlohmann::json::array();
    for (std::size_t c = 0; c < model.k; ++c) {
      const int ci = static_cast<int>(c);
      auto f = rec->ref_distribution.find(ci);
      nlohmann::json terms = nlohmann::json::array();
      if (topics) {
        for (const auto& p : topics->at("clusters")) {
          if (p.at("cluster").get<int>() == ci) terms = p.at("terms");
        }
      }
      nlohmann::json shap = nullptr;
      if (explain && explain->contains("clusters") && (*explain)["clusters"].contains(std::to_string(c))) {
        shap = (*explain)["clusters"][std::to_string(c)]["summary_topk"];
      }
      auto y = rec->estimated_yield.find(ci);
      clusters.push_back(
          {{"cluster", ci},
           {"size", sizes[c]},
           {"ref_fraction", f == rec->ref_distribution.end() ? 0.0 : f->second},
           {"selected", std::find(rec->selected_clusters.begin(), rec->selected_clusters.end(), ci) !=
                            rec->selected_clusters.end()},
           {"estimated_yield", y == rec->estimated_yield.end() ? nlohmann::json() : nlohmann::json(y->second)},
           {"top_terms", std::move(terms)},
           {"shap_summary", std::move(shap)}});
    }
    // Bars in descending reference share, ties to the lower index.
    std::stable_sort(clusters.begin(), clusters.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
      return a["ref_fraction"].get<double>() > b["ref_fraction"].get<double>();
    });
    return {200, {{"iteration", rec->iteration},
                  {"model_iteration", mi},
                  {"k", model.k},
                  {"selection", rec->selection},
                  {"selected_clusters", rec->selected_clusters},
                  {"clusters", std::move(clusters)},
                  {"steering", steering(project_).value_or(nlohmann::json())}}};
  } catch (const Error& e) {
    return from_error(e);
  }
}

ApiResponse ReviewService::post_steering(const nlohmann::json& body) {
  std::lock_guard lock(mu_);
  try {
    std::optional<int> mi;
    if (body.is_object() && body.contains("model_iteration")) {
      mi = body["model_iteration"].get<int>();
    } else {
      mi = latest_model(project_);
    }
    if (!mi) return error_response(404, "UnknownRound", "no cluster model yet");
    if (!body.is_object() || !body.contains("clusters")) {
      return error_response(422, "InvalidArgument", "clusters is required");
    }
    set_steering(project_, *mi, body["clusters"].get<std::vector<int>>());
    return {201, *steering(project_)};
  } catch (const nlohmann::json::exception& e) {
    return error_response(422, "InvalidArgument", e.what());
  } catch (const Error& e) {
    return from_error(e);
  }
}

void install_routes(httplib::Server& server, ReviewService& service) {
  const ServiceOptions opts = service.options();
  server.set_default_headers({{"Access-Control-Allow-Origin", opts.cors_origin},
                              {"Access-Control-Allow-Headers", "Content-Type, X-Rarefind-Token"},
                              {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
  server.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
  if (!opts.token.empty()) {
    server.set_pre_routing_handler([token = opts.token](const httplib::Request& req, httplib::Response& res) {
      if (req.method == "OPTIONS" || !req.path.starts_with("/api/")) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      if (req.get_header_value("X-Rarefind-Token") != token) {
        res.status = 401;
        res.set_content(R"({"error":"Unauthorized","message":"missing or wrong token"})", "application/json");
        return httplib::Server::HandlerResponse::Handled;
      }
      return httplib::Server::HandlerResponse::Unhandled;
    });
  }
  if (!opts.ui_dir.empty()) server.set_mount_point("/", opts.ui_dir);

  auto send = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  auto parse_body = [](const httplib::Request& req) {
    return nlohmann::json::parse(req.body, nullptr, false);
  };
  auto bad_json = [send](httplib::Response& res) {
    send(res, {400, {{"error", "BadRequest"}, {"message", "body is not valid JSON"}}});
  };

  // Round numbers beyond int range end up here through std::stoi.
  server.set_exception_handler([send](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string what = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::out_of_range&) {
      return send(res, {404, {{"error", "UnknownRound"}, {"message", "round number out of range"}}});
    } catch (const std::exception& e) {
      what = e.what();
    } catch (...) {
    }
    send(res, {500, {{"error", "Internal"}, {"message", what}}});
  });

  server.Get("/api/v1/health", [send](const httplib::Request&, httplib::Response& res) {
    send(res, {200, {{"status", "ok"}}});
  });
  server.Get("/api/v1/rounds", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.rounds());
  });
  server.Get(R"(/api/v1/rounds/(\d+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
    send(res, service.round(std::stoi(req.matches[1])));
  });
  server.Get(R"(/api/v1/rounds/(\d+)/queue)",
             [&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.queue(std::stoi(req.matches[1]), req.get_param_value("reviewer")));
             });
  server.Get(R"(/api/v1/rounds/(\d+)/disagreements)",
             [&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.disagreements(std::stoi(req.matches[1])));
             });
  server.Get(R"(/api/v1/rounds/(\d+)/agreement)",
             [&service, send](const httplib::Request& req, httplib::Response& res) {
               send(res, service.agreement(std::stoi(req.matches[1])));
             });
  server.Post(R"(/api/v1/rounds/(\d+)/seal)",
              [&service, send, parse_body, bad_json](const httplib::Request& req, httplib::Response& res) {
                const auto body = req.body.empty() ? nlohmann::json::object() : parse_body(req);
                if (body.is_discarded()) return bad_json(res);
                send(res, service.seal(std::stoi(req.matches[1]), body));
              });
  server.Post("/api/v1/labels", [&service, send, parse_body, bad_json](const httplib::Request& req,
                                                                     httplib::Response& res) {
    const auto body = parse_body(req);
    if (body.is_discarded()) return bad_json(res);
    send(res, service.post_label(body));
  });
  server.Post("/api/v1/adjudications", [&service, send, parse_body, bad_json](const httplib::Request& req,
                                                                            httplib::Response& res) {
    const auto body = parse_body(req);
    if (body.is_discarded()) return bad_json(res);
    send(res, service.post_adjudication(body));
  });
  server.Get("/api/v1/dashboard", [&service, send](const httplib::Request&, httplib::Response& res) {
    send(res, service.dashboard());
  });
  server.Get("/api/v1/clusters", [&service, send](const httplib::Request& req, httplib::Response& res) {
    std::optional<int> it;
    if (req.has_param("iteration")) {
      try {
        it = std::stoi(req.get_param_value("iteration"));
      } catch (const std::exception&) {
        return send(res, {422, {{"error", "InvalidArgument"}, {"message", "iteration must be an integer"}}});
      }
    }
    send(res, service.clusters(it));
  });
  server.Post("/api/v1/steering", [&service, send, parse_body, bad_json](const httplib::Request& req,
                                                                       httplib::Response& res) {
    const auto body = parse_body(req);
    if (body.is_discarded()) return bad_json(res);
    send(res, service.post_steering(body));
  });
}

}  // namespace rarefind
