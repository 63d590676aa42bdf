#include "core/csv.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace stratpart {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char ch = line[i];
    if (quoted) {
      if (ch == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  if (quoted) throw ParseError("unterminated quote at line " + std::to_string(lineno));
  fields.push_back(cur);
  for (auto& f : fields) {
    std::size_t b = f.find_first_not_of(" \t");
    std::size_t e = f.find_last_not_of(" \t");
    f = (b == std::string::npos) ? std::string() : f.substr(b, e - b + 1);
  }
  return fields;
}

double parse_double(const std::string& s, const std::string& what, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(lineno) + ": cannot parse " + what + " from '" +
                     s + "'");
  }
}

int parse_int(const std::string& s, const std::string& what, std::size_t lineno) {
  try {
    std::size_t pos = 0;
    int v = std::stoi(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ParseError("line " + std::to_string(lineno) + ": cannot parse " + what + " from '" +
                     s + "'");
  }
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  return it == header.end() ? -1 : static_cast<int>(it - header.begin());
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  CsvTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    auto fields = split_csv_line(line, lineno);
    if (table.header.empty()) {
      table.header = std::move(fields);
    } else {
      if (fields.size() != table.header.size())
        throw ParseError("line " + std::to_string(lineno) + ": expected " +
                         std::to_string(table.header.size()) + " fields, got " +
                         std::to_string(fields.size()));
      table.rows.push_back(std::move(fields));
    }
  }
  if (table.header.empty()) throw ParseError("'" + path + "' is empty");
  return table;
}

std::map<std::string, double> load_signals(const std::string& path) {
  CsvTable t = read_csv(path);
  int c_loc = t.column("location");
  if (c_loc < 0) throw ParseError("signals file '" + path + "' lacks a location column");
  int c_s = t.column("s");
  int c_code = t.column("intent_code");
  std::map<std::string, double> out;
  if (c_s >= 0) {
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      const auto& row = t.rows[i];
      if (out.count(row[c_loc]))
        throw ParseError("duplicate signal for location '" + row[c_loc] + "'");
      out[row[c_loc]] = parse_double(row[c_s], "s", i + 2);
    }
    return out;
  }
  if (c_code >= 0) {
    std::map<std::string, std::vector<int>> codes;
    for (std::size_t i = 0; i < t.rows.size(); ++i)
      codes[t.rows[i][c_loc]].push_back(parse_int(t.rows[i][c_code], "intent_code", i + 2));
    for (const auto& [loc, v] : codes) out[loc] = compute_signal(v);
    return out;
  }
  throw ParseError("signals file '" + path + "' needs either an 's' or an 'intent_code' column");
}

Dataset load_dataset(const std::string& dataset_path, const std::string& signals_path,
                     const LoadOptions& opts) {
  CsvTable t = read_csv(dataset_path);
  const char* required[] = {"subject_id", "location", "enroll_date", "treat_date",
                            "b_prior",    "b_post",   "b_ref",       "z"};
  for (const char* name : required)
    if (t.column(name) < 0)
      throw ParseError("dataset '" + dataset_path + "' lacks required column '" + name + "'");
  int c_a = t.column("a");
  int c_code = t.column("raw_outcome_code");
  if (c_a < 0 && c_code < 0)
    throw ParseError("dataset needs either an 'a' or a 'raw_outcome_code' column");

  std::vector<std::string> covnames;
  std::vector<int> covcols;
  for (std::size_t j = 0; j < t.header.size(); ++j) {
    if (t.header[j].rfind("x_", 0) == 0) {
      covnames.push_back(t.header[j]);
      covcols.push_back(static_cast<int>(j));
    }
  }

  const double belief_scale = opts.beliefs_are_percent ? 0.01 : 1.0;
  std::vector<SubjectRecord> recs;
  recs.reserve(t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    std::size_t lineno = i + 2;
    SubjectRecord r;
    r.subject_id = row[t.column("subject_id")];
    r.location = row[t.column("location")];
    r.enroll_date = row[t.column("enroll_date")];
    r.treat_date = row[t.column("treat_date")];
    r.b_prior = belief_scale * parse_double(row[t.column("b_prior")], "b_prior", lineno);
    r.b_post = belief_scale * parse_double(row[t.column("b_post")], "b_post", lineno);
    r.b_ref = belief_scale * parse_double(row[t.column("b_ref")], "b_ref", lineno);
    r.z = parse_int(row[t.column("z")], "z", lineno);
    if (c_code >= 0 && !row[c_code].empty())
      r.raw_outcome_code = parse_int(row[c_code], "raw_outcome_code", lineno);
    if (c_a >= 0 && !row[c_a].empty())
      r.a = parse_int(row[c_a], "a", lineno);
    else if (r.raw_outcome_code)
      r.a = derive_outcome(*r.raw_outcome_code);
    else
      throw ParseError("line " + std::to_string(lineno) + ": neither a nor raw_outcome_code set");
    for (int cc : covcols) r.x.push_back(parse_double(row[cc], "covariate", lineno));
    recs.push_back(std::move(r));
  }
  return Dataset(std::move(recs), load_signals(signals_path), std::move(covnames));
}

void write_dataset_csv(const Dataset& ds, const std::string& dataset_path,
                       const std::string& signals_path) {
  std::ofstream out(dataset_path);
  if (!out) throw ParseError("cannot write '" + dataset_path + "'");
  bool codes = std::all_of(ds.records().begin(), ds.records().end(),
                           [](const SubjectRecord& r) { return r.raw_outcome_code.has_value(); });
  out << "subject_id,location,enroll_date,treat_date,b_prior,b_post,b_ref,z,a";
  if (codes) out << ",raw_outcome_code";
  for (const auto& name : ds.covariate_names()) out << "," << name;
  out << "\n";
  for (const auto& r : ds.records()) {
    out << r.subject_id << ',' << r.location << ',' << r.enroll_date << ',' << r.treat_date
        << ',' << fmt_double(r.b_prior) << ',' << fmt_double(r.b_post) << ','
        << fmt_double(r.b_ref) << ',' << r.z << ',' << r.a;
    if (codes) out << ',' << *r.raw_outcome_code;
    for (double v : r.x) out << ',' << fmt_double(v);
    out << "\n";
  }
  if (!out.good()) throw ParseError("write failed for '" + dataset_path + "'");

  std::ofstream sig(signals_path);
  if (!sig) throw ParseError("cannot write '" + signals_path + "'");
  sig << "location,s\n";
  for (const auto& [loc, s] : ds.signals()) sig << loc << ',' << fmt_double(s) << "\n";
  if (!sig.good()) throw ParseError("write failed for '" + signals_path + "'");
}

}  // namespace stratpart
