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

#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace rftest {

namespace fs = std::filesystem;

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  for (int attempt = 0; attempt < 100; ++attempt) {
    fs::path p = fs::temp_directory_path() / (tag + "-" + std::to_string(rng()));
    if (fs::create_directory(p)) {
      path_ = p;
      return;
    }
  }
  throw std::runtime_error("cannot create temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::vector<rarefind::TokenRange> naive_occurrences(const std::vector<std::string>& tokens,
                                                    const std::set<std::vector<std::string>>& phrases) {
  std::vector<rarefind::TokenRange> out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (const auto& p : phrases) {
      if (p.empty() || i + p.size() > tokens.size()) continue;
      bool ok = true;
      for (std::size_t j = 0; j < p.size(); ++j) ok = ok && tokens[i + j] == p[j];
      if (ok) out.push_back({i, i + p.size() - 1});
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<NaiveHit> naive_proximity(const std::vector<rarefind::TokenRange>& ip,
                                      const std::vector<rarefind::TokenRange>& abuse,
                                      std::size_t window) {
  std::vector<NaiveHit> out;
  for (const auto& a : ip) {
    for (const auto& b : abuse) {
      // Count positions strictly between the two spans.
      std::size_t between = 0;
      const std::size_t lo = std::min(a.last, b.last);
      const std::size_t hi = std::max(a.first, b.first);
      for (std::size_t t = lo + 1; t < hi; ++t) ++between;
      if (between <= window) out.push_back({a, b, between});
    }
  }
  return out;
}

double naive_multiset_jaccard(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::string, std::pair<long, long>> counts;
  for (const auto& t : a) ++counts[t].first;
  for (const auto& t : b) ++counts[t].second;
  long num = 0, den = 0;
  for (const auto& [t, c] : counts) {
    num += std::min(c.first, c.second);
    den += std::max(c.first, c.second);
  }
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double best_partition_objective(const std::vector<std::vector<double>>& points, std::size_t k) {
  const std::size_t n = points.size();
  const std::size_t dims = points.empty() ? 0 : points[0].size();
  std::vector<int> label(n, 0);
  double best = -1e300;
  // Odometer over k^n labelings.
  while (true) {
    std::vector<std::vector<double>> sums(k, std::vector<double>(dims, 0.0));
    std::vector<std::size_t> sizes(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++sizes[label[i]];
      for (std::size_t d = 0; d < dims; ++d) sums[label[i]][d] += points[i][d];
    }
    if (std::all_of(sizes.begin(), sizes.end(), [](std::size_t s) { return s > 0; })) {
      double obj = 0.0;
      for (const auto& s : sums) {
        double sq = 0.0;
        for (double v : s) sq += v * v;
        obj += std::sqrt(sq);
      }
      best = std::max(best, obj);
    }
    std::size_t i = 0;
    while (i < n && ++label[i] == static_cast<int>(k)) label[i++] = 0;
    if (i == n) break;
  }
  return best;
}

double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> ra, rb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1;
    ra[a[i]] += 1;
    rb[b[i]] += 1;
  }
  auto c2 = [](double x) { return x * (x - 1) / 2; };
  double index = 0, sa = 0, sb = 0;
  for (const auto& [k, v] : table) index += c2(v);
  for (const auto& [k, v] : ra) sa += c2(v);
  for (const auto& [k, v] : rb) sb += c2(v);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = sa * sb / total;
  const double max_index = (sa + sb) / 2;
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

std::vector<double> permutation_shapley(std::size_t n,
                                        const std::function<double(const std::vector<bool>&)>& v) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> phi(n, 0.0);
  double count = 0;
  do {
    std::vector<bool> in(n, false);
    double prev = v(in);
    for (std::size_t f : order) {
      in[f] = true;
      const double cur = v(in);
      phi[f] += cur - prev;
      prev = cur;
    }
    count += 1;
  } while (std::next_permutation(order.begin(), order.end()));
  for (auto& p : phi) p /= count;
  return phi;
}

const std::vector<std::string>& cfpb_header() {
  static const std::vector<std::string> h = {
      "Date received", "Product", "Sub-product", "Issue", "Sub-issue", "Consumer complaint narrative",
      "Company public response", "Company", "State", "ZIP code", "Tags", "Consumer consent provided?",
      "Submitted via", "Date sent to company", "Company response to consumer", "Timely response?",
      "Consumer disputed?", "Complaint ID"};
  return h;
}

std::string csv_quote(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string to_csv(const std::vector<rarefind::Complaint>& rows) {
  std::ostringstream os;
  const auto& h = cfpb_header();
  for (std::size_t i = 0; i < h.size(); ++i) os << (i ? "," : "") << csv_quote(h[i]);
  os << "\n";
  auto opt = [](const std::optional<std::string>& s) { return s.value_or(""); };
  for (const auto& c : rows) {
    const std::vector<std::string> f = {c.date_received.iso(),
                                        opt(c.product),
                                        opt(c.sub_product),
                                        opt(c.issue),
                                        opt(c.sub_issue),
                                        opt(c.narrative),
                                        opt(c.company_public_response),
                                        c.company,
                                        c.state,
                                        c.zip,
                                        opt(c.tags),
                                        c.consent_provided,
                                        c.submitted_via,
                                        c.date_sent ? c.date_sent->iso() : "",
                                        c.company_response,
                                        c.timely,
                                        opt(c.disputed),
                                        c.complaint_id};
    for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << csv_quote(f[i]);
    os << "\n";
  }
  return os.str();
}

rarefind::Complaint make_complaint(const std::string& id, const std::string& narrative,
                                   const std::string& date, const std::string& company) {
  rarefind::Complaint c;
  c.complaint_id = id;
  c.date_received = *rarefind::Date::parse(date);
  c.product = "Credit card";
  c.issue = "Problem with a purchase";
  if (!narrative.empty()) c.narrative = narrative;
  c.company = company;
  c.state = "CA";
  c.zip = "90210";
  c.consent_provided = "Consent provided";
  c.submitted_via = "Web";
  c.date_sent = c.date_received;
  c.company_response = "Closed with explanation";
  c.timely = "Yes";
  return c;
}

namespace {

const std::vector<std::string> kFiller = {
    "i",       "called", "the",     "bank",     "several", "times",  "and",     "they",   "said",
    "account", "was",    "closed",  "after",    "months",  "of",     "payments", "with",  "no",
    "help",    "from",   "company", "customer", "service", "letter", "balance", "late",   "fee"};

std::string words(std::mt19937_64& rng, const std::vector<std::string>& vocab, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += ' ';
    s += vocab[rng() % vocab.size()];
  }
  return s;
}

}  // namespace

std::vector<rarefind::Complaint> random_corpus(std::mt19937_64& rng, std::size_t n) {
  std::vector<rarefind::Complaint> out;
  static const std::vector<std::string> companies = {"Acme Bank", "Beta Credit", "Gamma Loans"};
  static const std::vector<std::string> dates = {"2020-01-02", "2020-01-03", "2021-06-30"};
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = std::to_string(100000 + rng() % 900000) + "-" + std::to_string(i);
    const unsigned kind = rng() % 10;
    if (kind == 0) {
      out.push_back(make_complaint(id, "", dates[rng() % 3], companies[rng() % 3]));
    } else if ((kind == 1 || kind == 2) && !out.empty()) {
      // Copy of an earlier complaint: exact duplicate or resubmission.
      rarefind::Complaint c = out[rng() % out.size()];
      c.complaint_id = id;
      if (kind == 2) c.company = companies[rng() % 3];
      out.push_back(std::move(c));
    } else {
      out.push_back(make_complaint(id, words(rng, kFiller, 5 + rng() % 30), dates[rng() % 3],
                                   companies[rng() % 3]));
    }
  }
  return out;
}

namespace {

struct Topic {
  std::string product;
  std::vector<std::string> sentences;
};

const std::vector<Topic>& negative_topics() {
  static const std::vector<Topic> topics = {
      {"Mortgage",
       {"my mortgage servicer misapplied my escrow payment",
        "the loan modification paperwork was lost twice by the servicer",
        "escrow analysis raised my monthly payment without notice",
        "they reported my mortgage payment late although i paid on time",
        "the servicer refuses to apply extra principal payments",
        "my home insurance was force placed even though i had coverage"}},
      {"Debt collection",
       {"a debt collector keeps calling my workplace about a medical bill",
        "the collection agency never sent a validation letter",
        "they call me every morning about a debt i do not recognize",
        "the collector threatened to sue over an old utility bill",
        "i asked for verification of the debt and received nothing"}},
      {"Credit reporting",
       {"the credit bureau shows an inaccurate collection account",
        "my dispute with the credit bureau was closed without investigation",
        "there is a hard inquiry on my credit report i never authorized",
        "the bureau merged my file with someone with a similar name",
        "incorrect late payments remain on my credit report after dispute"}},
      {"Student loan",
       {"my student loan servicer placed my loans in forbearance without asking",
        "income driven repayment recertification was delayed for months",
        "the servicer miscounted my qualifying public service payments",
        "my student loan payment increased after the transfer to a new servicer"}},
      {"Checking or savings account",
       {"the bank charged overdraft fees on pending transactions",
        "a branch manager refused to reverse a maintenance fee",
        "my direct deposit was held for ten business days",
        "the bank closed my savings account and mailed a check weeks later"}},
      {"Vehicle loan or lease",
       {"the dealer added warranty charges to my auto loan",
        "my car was repossessed while i was current on payments",
        "the lease end inspection charged for normal wear",
        "gap insurance refund was never credited to my auto loan"}},
  };
  return topics;
}

const std::vector<std::string>& partner_mentions() {
  static const std::vector<std::string> s = {
      "my husband and i have been customers for many years",
      "my wife and i refinanced together last spring",
      "my spouse is also listed on the account",
      "my partner called the company on my behalf",
      "my boyfriend helped me write this complaint",
  };
  return s;
}

// Keyword-rule false positives: a partner and an abuse term close together in
// an ordinary complaint.
const std::vector<std::string>& noisy_partner_mentions() {
  static const std::vector<std::string> s = {
      "my husband was upset about the fees they charged",
      "my wife opened a new checking account at the same branch",
      "my spouse was harassed by their collection calls at home",
  };
  return s;
}

const std::vector<std::string>& partner_terms() {
  static const std::vector<std::string> s = {"ex husband", "ex wife", "husband", "boyfriend", "ex boyfriend",
                                             "spouse", "ex partner", "girlfriend"};
  return s;
}

// Shared latent vocabulary of planted positives, without abuse keywords.
const std::vector<std::string>& latent_sentences() {
  static const std::vector<std::string> s = {
      "took out a credit card in my name without my permission during our separation",
      "after the divorce i discovered loans i never signed for",
      "used my social security number to open accounts while we were separated",
      "maxed out our joint account and left me with the debt",
      "forged my signature on the loan documents",
      "i have a protective order but the lender still talks to him",
      "withdrew my paycheck from our joint account without my consent",
      "ran up debt in my name and now my credit is ruined after the divorce",
      "refused to remove me from the joint loan after we separated",
      "took my identity and applied for credit behind my back",
  };
  return s;
}

const std::vector<std::string>& abuse_sentences() {
  static const std::vector<std::string> s = {
      "{P} stole money from me and opened cards in my name",
      "{P} was abusive and controlling with all of our finances",
      "{P} fraudulently opened a line of credit",
      "{P} exploited my trust and hid the statements",
      "i am a survivor of domestic abuse and {P} controlled our accounts",
  };
  return s;
}

std::string replace_partner(std::string s, const std::string& p) {
  const auto pos = s.find("{P}");
  if (pos != std::string::npos) s.replace(pos, 3, "my " + p);
  return s;
}

}  // namespace

PlantedCorpus planted_corpus(std::size_t n, double positive_rate, double no_abuse_fraction,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  PlantedCorpus out;
  const auto n_pos = static_cast<std::size_t>(std::llround(static_cast<double>(n) * positive_rate));
  const auto n_no_abuse = static_cast<std::size_t>(std::llround(static_cast<double>(n_pos) * no_abuse_fraction));
  const auto& topics = negative_topics();
  static const std::vector<std::string> days = {"2019-05-01", "2020-02-11", "2021-08-23", "2022-11-30"};
  auto pick = [&](const std::vector<std::string>& v) -> const std::string& { return v[rng() % v.size()]; };

  for (std::size_t i = 0; i < n; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "C%07zu", i);
    const std::string id = buf;
    std::vector<std::string> sents;
    std::string product;
    if (i < n_pos) {
      // The abuse story is told around an ordinary product complaint.
      const Topic& t = topics[rng() % topics.size()];
      product = t.product;
      const std::string partner = pick(partner_terms());
      sents.push_back("my " + partner + " " + pick(latent_sentences()));
      const std::size_t extra = 1 + rng() % 2;
      for (std::size_t s = 0; s < extra; ++s) sents.push_back(pick(latent_sentences()));
      const std::size_t context = 1 + rng() % 3;
      for (std::size_t s = 0; s < context; ++s) sents.push_back(pick(t.sentences));
      if (i >= n_no_abuse) {
        sents.insert(sents.begin() + 1, replace_partner(pick(abuse_sentences()), partner));
      }
      sents.push_back(words(rng, kFiller, 4 + rng() % 6));
      out.positives.insert(id);
      if (i < n_no_abuse) out.positives_without_abuse.insert(id);
    } else {
      const Topic& t = topics[rng() % topics.size()];
      product = t.product;
      const std::size_t m = 3 + rng() % 3;
      for (std::size_t s = 0; s < m; ++s) sents.push_back(pick(t.sentences));
      const unsigned r = rng() % 100;
      if (r < 14) {
        sents.insert(sents.begin() + static_cast<long>(rng() % sents.size()), pick(partner_mentions()));
      } else if (r < 16) {
        sents.push_back(pick(noisy_partner_mentions()));
      }
      sents.push_back(words(rng, kFiller, 4 + rng() % 6));
    }
    std::string text;
    for (const auto& s : sents) text += s + ". ";
    text.pop_back();
    rarefind::Complaint c = make_complaint(id, text, pick(days), "Bank " + std::to_string(rng() % 7));
    c.product = product;
    out.complaints.push_back(std::move(c));
  }
  // Interleave positives by shuffling ids' order, keeping ids stable.
  std::shuffle(out.complaints.begin(), out.complaints.end(), rng);
  out.base_rate = static_cast<double>(n_pos) / static_cast<double>(n);
  return out;
}

std::size_t label_round_truthfully(rarefind::Project& project, int iteration,
                                   const std::set<std::string>& truth) {
  const rarefind::ReviewRound& r = project.round(iteration);
  std::vector<rarefind::Label> labels;
  for (const auto& [id, reviewers] : r.assignments) {
    for (const auto& rv : reviewers) {
      if (r.label(id, rv)) continue;
      rarefind::Label l;
      l.complaint_id = id;
      l.reviewer_id = rv;
      l.iteration = iteration;
      l.verdict = truth.count(id) ? rarefind::Verdict::kRelevant : rarefind::Verdict::kNotRelevant;
      labels.push_back(std::move(l));
    }
  }
  const std::size_t n = labels.size();
  if (n) project.append_labels(std::move(labels));
  return n;
}

std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace rftest
