#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace stratpart {

struct SubjectRecord {
  std::string subject_id;
  std::string location;
  std::string enroll_date;  // opaque day key of the first survey
  std::string treat_date;   // opaque day key of the second survey
  double b_prior = 0.0;
  double b_post = 0.0;
  double b_ref = 0.0;
  int z = 0;
  int a = 0;
  std::optional<int> raw_outcome_code;  // 1..5, 1 means participated
  std::vector<double> x;                // optional covariates
};

struct PlantedTruth {
  std::array<double, 4> theta{0.0, 0.0, 0.0, 0.0};  // belief equation on (1, z, c, z*c)
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<double> gamma;  // covariate coefficients in the participation index
  double rho = 0.0;           // corr(e, u)
  double sigma_e = 0.0;
};

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EstimationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

int derive_outcome(int raw_outcome_code);
double compute_signal(const std::vector<int>& intent_codes);
int derive_condition(double b_ref, double s);  // 1 iff b_ref >= s

struct DatasetSummary {
  std::size_t n = 0;
  std::map<std::string, std::size_t> by_location;
  std::size_t n_below = 0, n_above = 0;
  std::size_t n_treated = 0, n_control = 0;
  std::size_t n_participants = 0;
  double participation_share = 0.0;
  double mean_delta_b = 0.0;
  std::size_t n_clusters = 0;  // populated location x enroll_date x treat_date cells
};

class Dataset {
 public:
  Dataset(std::vector<SubjectRecord> records, std::map<std::string, double> signals,
          std::vector<std::string> covariate_names = {});

  std::size_t size() const { return recs_.size(); }
  const SubjectRecord& rec(std::size_t i) const { return recs_[i]; }
  const std::vector<SubjectRecord>& records() const { return recs_; }
  const std::map<std::string, double>& signals() const { return signals_; }
  const std::vector<std::string>& covariate_names() const { return covnames_; }
  double signal(const std::string& location) const;
  int condition(std::size_t i) const { return cond_[i]; }
  double delta_b(std::size_t i) const { return recs_[i].b_post - recs_[i].b_prior; }

  DatasetSummary summary() const;
  // cluster ids per record for the given key fields (subset of
  // location/enroll_date/treat_date/subject_id); returns ids in [0, n_clusters)
  std::vector<int> cluster_index(const std::vector<std::string>& keys, int& n_clusters) const;
  // resampled copy sharing signals; skips cross-record checks (duplicates expected)
  Dataset subset(const std::vector<std::size_t>& idx) const;

 private:
  Dataset() = default;
  void derive_conditions();

  std::vector<SubjectRecord> recs_;
  std::map<std::string, double> signals_;
  std::vector<std::string> covnames_;
  std::vector<int> cond_;
};

// Dummy coding for one categorical factor. The largest cell is the reference;
// when an outcome vector is given, cells that perfectly predict it are merged
// with their neighbor in sorted label order until none remain.
struct FactorEncoding {
  std::vector<std::string> labels;     // one per dummy column
  std::vector<int> column_of_record;   // -1 for the reference cell
  std::string reference;
  std::vector<std::string> merge_notes;
};

FactorEncoding encode_factor(const std::vector<std::string>& values,
                             const std::vector<int>& outcome, const std::string& prefix);

}  // namespace stratpart
