#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "graphre/errors.hpp"
#include "graphre/triples.hpp"

namespace graphre {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

inline PRF prf_from_counts(std::int64_t tp, std::int64_t pred_total,
                           std::int64_t gold_total) {
  PRF m;
  m.precision = pred_total > 0 ? static_cast<double>(tp) / pred_total : 0.0;
  m.recall = gold_total > 0 ? static_cast<double>(tp) / gold_total : 0.0;
  m.f1 = (m.precision + m.recall) > 0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

struct StratumRow {
  std::string label;
  int lo = 0;
  int hi = 0;  // -1 = open-ended
  int count = 0;
  double mean_f1 = 0.0;
};

struct EvalReport {
  PRF micro;
  std::int64_t tp = 0, pred_total = 0, gold_total = 0;
  std::vector<double> per_doc_f1;
  std::vector<int> per_doc_k;
  std::vector<StratumRow> strata;
  double pearson = 0.0;
  bool pearson_defined = false;
};

// Exact evaluation: a predicted triple is correct if head text, relation,
// and tail text all match a gold triple; entity types never matter. A
// document with neither gold nor predicted triples scores F1 = 1.
inline EvalReport exact_micro_f1(const std::vector<TripleSet>& pred,
                                 const std::vector<TripleSet>& gold) {
  if (pred.size() != gold.size())
    throw usage_error("exact_micro_f1: misaligned document lists (" +
                      std::to_string(pred.size()) + " vs " +
                      std::to_string(gold.size()) + ")");
  EvalReport rep;
  rep.per_doc_f1.reserve(pred.size());
  rep.per_doc_k.reserve(pred.size());
  for (size_t d = 0; d < pred.size(); ++d) {
    const auto tp = static_cast<std::int64_t>(pred[d].intersection_size(gold[d]));
    rep.tp += tp;
    rep.pred_total += static_cast<std::int64_t>(pred[d].size());
    rep.gold_total += static_cast<std::int64_t>(gold[d].size());
    double f1;
    if (gold[d].empty() && pred[d].empty())
      f1 = 1.0;  // vacuous perfection
    else
      f1 = prf_from_counts(tp, static_cast<std::int64_t>(pred[d].size()),
                           static_cast<std::int64_t>(gold[d].size()))
               .f1;
    rep.per_doc_f1.push_back(f1);
    rep.per_doc_k.push_back(static_cast<int>(gold[d].size()));
  }
  rep.micro = prf_from_counts(rep.tp, rep.pred_total, rep.gold_total);
  return rep;
}

// micro-averaged over non-O tags
inline PRF tagging_micro_f1(const std::vector<std::vector<int>>& pred,
                            const std::vector<std::vector<int>>& gold,
                            int o_tag = 0) {
  if (pred.size() != gold.size())
    throw usage_error("tagging_micro_f1: misaligned documents");
  std::int64_t tp = 0, p_total = 0, g_total = 0;
  for (size_t d = 0; d < pred.size(); ++d) {
    if (pred[d].size() != gold[d].size())
      throw usage_error("tagging_micro_f1: length mismatch in document " +
                        std::to_string(d));
    for (size_t i = 0; i < pred[d].size(); ++i) {
      const bool p = pred[d][i] != o_tag;
      const bool g = gold[d][i] != o_tag;
      if (p) ++p_total;
      if (g) ++g_total;
      if (p && g && pred[d][i] == gold[d][i]) ++tp;
    }
  }
  return prf_from_counts(tp, p_total, g_total);
}

// sample Pearson correlation; constant input is an error, not 0
inline double pearson_r(const std::vector<double>& x,
                        const std::vector<double>& y) {
  if (x.size() != y.size())
    throw usage_error("pearson_r: length mismatch");
  const size_t n = x.size();
  if (n < 2) throw usage_error("pearson_r: need at least 2 points");
  double mx = 0.0, my = 0.0;
  for (size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0)
    throw numeric_error("pearson_r: undefined for a constant series");
  return sxy / std::sqrt(sxx * syy);
}

// default buckets follow the complexity strata used in the analysis
inline std::vector<std::pair<int, int>> default_k_buckets() {
  return {{1, 5}, {6, 20}, {21, 50}, {51, -1}};
}

inline std::vector<StratumRow> stratified_report(
    const std::vector<double>& per_doc_f1, const std::vector<int>& per_doc_k,
    std::vector<std::pair<int, int>> buckets = default_k_buckets()) {
  if (per_doc_f1.size() != per_doc_k.size())
    throw usage_error("stratified_report: length mismatch");
  std::vector<StratumRow> rows;
  for (auto [lo, hi] : buckets) {
    StratumRow r;
    r.lo = lo;
    r.hi = hi;
    std::ostringstream label;
    if (hi < 0)
      label << lo << "+";
    else
      label << lo << "-" << hi;
    r.label = label.str();
    double sum = 0.0;
    for (size_t d = 0; d < per_doc_k.size(); ++d) {
      if (per_doc_k[d] < lo) continue;
      if (hi >= 0 && per_doc_k[d] > hi) continue;
      ++r.count;
      sum += per_doc_f1[d];
    }
    r.mean_f1 = r.count ? sum / r.count : 0.0;
    rows.push_back(std::move(r));
  }
  return rows;
}

inline EvalReport full_report(const std::vector<TripleSet>& pred,
                              const std::vector<TripleSet>& gold) {
  EvalReport rep = exact_micro_f1(pred, gold);
  rep.strata = stratified_report(rep.per_doc_f1, rep.per_doc_k);
  std::vector<double> k(rep.per_doc_k.begin(), rep.per_doc_k.end());
  try {
    rep.pearson = pearson_r(k, rep.per_doc_f1);
    rep.pearson_defined = true;
  } catch (const error&) {
    rep.pearson_defined = false;  // constant series (e.g. perfect predictions)
  }
  return rep;
}

// ---- emission ----

inline std::string report_text(const EvalReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os << std::setprecision(4);
  os << "documents   " << r.per_doc_f1.size() << "\n"
     << "micro P     " << r.micro.precision << "\n"
     << "micro R     " << r.micro.recall << "\n"
     << "micro F1    " << r.micro.f1 << "\n";
  if (r.pearson_defined)
    os << "pearson r   " << r.pearson << "  (k vs per-doc F1)\n";
  else
    os << "pearson r   undefined (constant series)\n";
  if (!r.strata.empty()) {
    os << "k bucket    docs   mean F1\n";
    for (const auto& s : r.strata) {
      os << "  " << std::setw(6) << std::left << s.label << std::right
         << std::setw(8) << s.count << "   ";
      if (s.count)
        os << std::setprecision(4) << s.mean_f1;
      else
        os << "-";
      os << "\n";
    }
  }
  return os.str();
}

inline std::string report_csv(const EvalReport& r) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os << std::setprecision(6);
  os << "metric,value\n";
  os << "docs," << r.per_doc_f1.size() << "\n";
  os << "micro_P," << r.micro.precision << "\n";
  os << "micro_R," << r.micro.recall << "\n";
  os << "micro_F1," << r.micro.f1 << "\n";
  if (r.pearson_defined) os << "pearson_r," << r.pearson << "\n";
  for (const auto& s : r.strata) {
    os << "bucket_" << s.label << "_docs," << s.count << "\n";
    if (s.count) os << "bucket_" << s.label << "_mean_f1," << s.mean_f1 << "\n";
  }
  return os.str();
}

inline nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["docs"] = r.per_doc_f1.size();
  j["micro_P"] = r.micro.precision;
  j["micro_R"] = r.micro.recall;
  j["micro_F1"] = r.micro.f1;
  if (r.pearson_defined) j["pearson_r"] = r.pearson;
  j["strata"] = nlohmann::json::array();
  for (const auto& s : r.strata) {
    nlohmann::json row;
    row["bucket"] = s.label;
    row["docs"] = s.count;
    if (s.count) row["mean_f1"] = s.mean_f1;
    j["strata"].push_back(row);
  }
  return j;
}

}  // namespace graphre
