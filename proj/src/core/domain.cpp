#include "core/domain.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace stratpart {

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
  std::ostringstream os;
  os << "validation failed (" << issues.size() << " issue"
     << (issues.size() == 1 ? "" : "s") << ")";
  std::size_t shown = std::min<std::size_t>(issues.size(), 12);
  for (std::size_t i = 0; i < shown; ++i) os << "\n  - " << issues[i];
  if (shown < issues.size()) os << "\n  - ... " << issues.size() - shown << " more";
  return os.str();
}

bool in_unit(double v) { return std::isfinite(v) && v >= 0.0 && v <= 1.0; }

}  // namespace

ValidationError::ValidationError(std::vector<std::string> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

int derive_outcome(int raw_outcome_code) {
  if (raw_outcome_code < 1 || raw_outcome_code > 5) {
    throw ValidationError({"raw_outcome_code " + std::to_string(raw_outcome_code) +
                           " outside 1..5"});
  }
  return raw_outcome_code == 1 ? 1 : 0;
}

double compute_signal(const std::vector<int>& intent_codes) {
  if (intent_codes.empty()) throw ValidationError({"compute_signal: empty intent collection"});
  std::size_t hits = 0;
  for (int code : intent_codes) {
    if (code < 1 || code > 4)
      throw ValidationError({"intent_code " + std::to_string(code) + " outside 1..4"});
    if (code <= 2) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(intent_codes.size());
}

int derive_condition(double b_ref, double s) {
  if (!in_unit(b_ref) || !in_unit(s))
    throw ValidationError({"derive_condition: arguments must lie in [0,1]"});
  return b_ref >= s ? 1 : 0;  // boundary belongs to the above-group
}

Dataset::Dataset(std::vector<SubjectRecord> records, std::map<std::string, double> signals,
                 std::vector<std::string> covariate_names)
    : recs_(std::move(records)), signals_(std::move(signals)),
      covnames_(std::move(covariate_names)) {
  std::vector<std::string> issues;
  std::set<std::string> seen_ids;
  for (const auto& [loc, s] : signals_) {
    if (!in_unit(s)) issues.push_back("signal for location '" + loc + "' outside [0,1]");
  }
  for (const auto& r : recs_) {
    const std::string who = "subject '" + r.subject_id + "'";
    if (!seen_ids.insert(r.subject_id).second) issues.push_back("duplicate id: " + who);
    if (!in_unit(r.b_prior)) issues.push_back(who + ": b_prior outside [0,1]");
    if (!in_unit(r.b_post)) issues.push_back(who + ": b_post outside [0,1]");
    if (!in_unit(r.b_ref)) issues.push_back(who + ": b_ref outside [0,1]");
    if (r.z != 0 && r.z != 1) issues.push_back(who + ": z not binary");
    if (r.a != 0 && r.a != 1) issues.push_back(who + ": a not binary");
    if (r.raw_outcome_code) {
      int code = *r.raw_outcome_code;
      if (code < 1 || code > 5)
        issues.push_back(who + ": raw_outcome_code outside 1..5");
      else if (r.a != derive_outcome(code))
        issues.push_back(who + ": a inconsistent with raw_outcome_code");
    }
    if (!signals_.count(r.location))
      issues.push_back(who + ": no signal for location '" + r.location + "'");
    if (r.x.size() != covnames_.size())
      issues.push_back(who + ": covariate count mismatch");
    for (double v : r.x)
      if (!std::isfinite(v)) {
        issues.push_back(who + ": non-finite covariate");
        break;
      }
  }
  if (!issues.empty()) throw ValidationError(std::move(issues));
  derive_conditions();
}

void Dataset::derive_conditions() {
  cond_.resize(recs_.size());
  for (std::size_t i = 0; i < recs_.size(); ++i)
    cond_[i] = derive_condition(recs_[i].b_ref, signals_.at(recs_[i].location));
}

double Dataset::signal(const std::string& location) const {
  auto it = signals_.find(location);
  if (it == signals_.end())
    throw ValidationError({"no signal for location '" + location + "'"});
  return it->second;
}

DatasetSummary Dataset::summary() const {
  DatasetSummary s;
  s.n = recs_.size();
  std::set<std::string> cells;
  double db_sum = 0.0;
  for (std::size_t i = 0; i < recs_.size(); ++i) {
    const auto& r = recs_[i];
    ++s.by_location[r.location];
    (cond_[i] ? s.n_above : s.n_below) += 1;
    (r.z ? s.n_treated : s.n_control) += 1;
    s.n_participants += r.a;
    db_sum += delta_b(i);
    cells.insert(r.location + "\x1f" + r.enroll_date + "\x1f" + r.treat_date);
  }
  s.n_clusters = cells.size();
  if (s.n) {
    s.participation_share = static_cast<double>(s.n_participants) / s.n;
    s.mean_delta_b = db_sum / s.n;
  }
  return s;
}

std::vector<int> Dataset::cluster_index(const std::vector<std::string>& keys,
                                        int& n_clusters) const {
  for (const auto& k : keys) {
    if (k != "location" && k != "enroll_date" && k != "treat_date" && k != "subject_id")
      throw ValidationError({"unknown cluster key '" + k + "'"});
  }
  std::map<std::string, int> ids;
  std::vector<int> out(recs_.size());
  for (std::size_t i = 0; i < recs_.size(); ++i) {
    std::string key;
    for (const auto& k : keys) {
      const auto& r = recs_[i];
      key += (k == "location" ? r.location
              : k == "enroll_date" ? r.enroll_date
              : k == "treat_date" ? r.treat_date
                                  : r.subject_id);
      key += '\x1f';
    }
    auto [it, fresh] = ids.emplace(key, static_cast<int>(ids.size()));
    (void)fresh;
    out[i] = it->second;
  }
  n_clusters = static_cast<int>(ids.size());
  return out;
}

Dataset Dataset::subset(const std::vector<std::size_t>& idx) const {
  Dataset out;
  out.signals_ = signals_;
  out.covnames_ = covnames_;
  out.recs_.reserve(idx.size());
  out.cond_.reserve(idx.size());
  for (std::size_t i : idx) {
    out.recs_.push_back(recs_[i]);
    out.cond_.push_back(cond_[i]);
  }
  return out;
}

FactorEncoding encode_factor(const std::vector<std::string>& values,
                             const std::vector<int>& outcome, const std::string& prefix) {
  // group label -> merged-cell id, starting from singleton groups in sorted order
  std::map<std::string, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < values.size(); ++i) cells[values[i]].push_back(i);

  struct Group {
    std::string label;
    std::vector<std::size_t> rows;
  };
  std::vector<Group> groups;
  for (auto& [label, rows] : cells) groups.push_back({label, std::move(rows)});

  FactorEncoding enc;
  auto constant_outcome = [&](const Group& g) {
    if (outcome.empty()) return false;
    int first = outcome[g.rows.front()];
    return std::all_of(g.rows.begin(), g.rows.end(),
                       [&](std::size_t r) { return outcome[r] == first; });
  };

  bool changed = true;
  while (changed && groups.size() > 1) {
    changed = false;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      if (!constant_outcome(groups[gi])) continue;
      std::size_t partner = (gi + 1 < groups.size()) ? gi + 1 : gi - 1;
      enc.merge_notes.push_back(prefix + ": merged '" + groups[gi].label + "' into '" +
                                groups[partner].label + "' (cell perfectly predicts outcome)");
      auto& dst = groups[partner].rows;
      dst.insert(dst.end(), groups[gi].rows.begin(), groups[gi].rows.end());
      groups[partner].label = groups[std::min(gi, partner)].label + "+" +
                              groups[std::max(gi, partner)].label;
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(gi));
      changed = true;
      break;
    }
  }

  // largest remaining cell is the reference (ties: first in label order)
  std::size_t ref = 0;
  for (std::size_t gi = 1; gi < groups.size(); ++gi)
    if (groups[gi].rows.size() > groups[ref].rows.size()) ref = gi;
  enc.reference = groups[ref].label;

  enc.column_of_record.assign(values.size(), -1);
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    if (gi == ref) continue;
    int col = static_cast<int>(enc.labels.size());
    enc.labels.push_back(prefix + "_" + groups[gi].label);
    for (std::size_t r : groups[gi].rows) enc.column_of_record[r] = col;
  }
  return enc;
}

}  // namespace stratpart
