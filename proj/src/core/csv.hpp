#pragma once

#include <map>
#include <string>
#include <vector>

#include "core/domain.hpp"

namespace stratpart {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  int column(const std::string& name) const;  // -1 if absent
};

CsvTable read_csv(const std::string& path);

struct LoadOptions {
  bool beliefs_are_percent = false;  // divide belief columns by 100 at ingestion
};

// signals file is either (location, s) or an intents file (subject_id, location, intent_code)
std::map<std::string, double> load_signals(const std::string& path);

Dataset load_dataset(const std::string& dataset_path, const std::string& signals_path,
                     const LoadOptions& opts = {});

void write_dataset_csv(const Dataset& ds, const std::string& dataset_path,
                       const std::string& signals_path);

}  // namespace stratpart
