#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "nnfuse/bitvector.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/io.hpp"
#include "nnfuse/schema.hpp"

namespace nnfuse {

/// One person-day observation.
struct EncodedSample {
  std::string household_id;
  BitVector x;
  std::optional<double> y;  // deliveries/day
};

struct EncodedDataset {
  FeatureDictionary dictionary;
  std::string survey_id;
  int year = 0;
  std::vector<EncodedSample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }

  std::size_t labeled_count() const noexcept {
    std::size_t n = 0;
    for (const auto& s : samples) n += s.y.has_value();
    return n;
  }

  std::vector<BitVector> covariates() const {
    std::vector<BitVector> xs;
    xs.reserve(samples.size());
    for (const auto& s : samples) xs.push_back(s.x);
    return xs;
  }

  void validate() const {
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (samples[i].x.size() != dictionary.dimension()) {
        fail(ErrorKind::kDimension, "sample " + std::to_string(i) + " has " +
                                        std::to_string(samples[i].x.size()) +
                                        " bits, dictionary has " +
                                        std::to_string(dictionary.dimension()));
      }
      if (samples[i].y && !(*samples[i].y >= 0.0)) {
        fail(ErrorKind::kData, "sample " + std::to_string(i) + " has negative y");
      }
    }
  }
};

inline void require_same_dictionary(const EncodedDataset& a, const EncodedDataset& b) {
  if (a.dictionary.hash() != b.dictionary.hash() || !(a.dictionary == b.dictionary)) {
    fail(ErrorKind::kDictionaryMismatch,
         "dictionary mismatch: " + a.survey_id + " (" + a.dictionary.hash() + ") vs " +
             b.survey_id + " (" + b.dictionary.hash() + ")");
  }
}

/// Samples with y present, in original order.
inline EncodedDataset labeled_subset(const EncodedDataset& ds) {
  EncodedDataset out{ds.dictionary, ds.survey_id, ds.year, {}};
  for (const auto& s : ds.samples) {
    if (s.y) out.samples.push_back(s);
  }
  return out;
}

/// `a` followed by `b`; both must share a dictionary.
inline EncodedDataset concat(const EncodedDataset& a, const EncodedDataset& b) {
  require_same_dictionary(a, b);
  EncodedDataset out = a;
  out.samples.insert(out.samples.end(), b.samples.begin(), b.samples.end());
  return out;
}

using HouseholdTotals = std::map<std::string, double>;

/// Sum of `y[i]` per household of sample i.
inline HouseholdTotals household_totals(const EncodedDataset& ds, std::span<const double> y) {
  if (y.size() != ds.size()) {
    fail(ErrorKind::kDimension, "per-sample value count does not match dataset size");
  }
  HouseholdTotals totals;
  for (std::size_t i = 0; i < ds.size(); ++i) totals[ds.samples[i].household_id] += y[i];
  return totals;
}

/// Household totals over the samples that carry y. Households without any
/// labeled sample are omitted.
inline HouseholdTotals labeled_household_totals(const EncodedDataset& ds) {
  HouseholdTotals totals;
  for (const auto& s : ds.samples) {
    if (s.y) totals[s.household_id] += *s.y;
  }
  return totals;
}

// ---------------------------------------------------------------------------
// Encoded dataset file
//
//   #nnfuse-encoded,1
//   #survey,<id>
//   #year,<int>
//   #dictionary_hash,<16 hex digits>
//   #feature,<name>,<category>,<category>,...     (one line per feature)
//   household_id,x,y
//   <id>,<d '0'/'1' characters, bit 0 first>,<y or empty for missing>
//
// All fields use CSV quoting. The hash is recomputed on load; a mismatch
// means the file was edited or corrupted.

inline std::string serialize_dataset(const EncodedDataset& ds) {
  std::string out;
  out += "#nnfuse-encoded,1\n";
  out += "#survey," + csv_escape(ds.survey_id) + "\n";
  out += "#year," + std::to_string(ds.year) + "\n";
  out += "#dictionary_hash," + ds.dictionary.hash() + "\n";
  for (const auto& g : ds.dictionary.groups()) {
    out += "#feature," + csv_escape(g.name);
    for (const auto& c : g.categories) out += "," + csv_escape(c);
    out += "\n";
  }
  out += "household_id,x,y\n";
  for (const auto& s : ds.samples) {
    out += csv_escape(s.household_id);
    out += ',';
    out += s.x.to_string();
    out += ',';
    if (s.y) out += format_double(*s.y);
    out += '\n';
  }
  return out;
}

inline EncodedDataset parse_dataset(std::string_view text, const std::string& source) {
  EncodedDataset ds;
  std::string stored_hash;
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  bool have_magic = false;

  while (text.starts_with("#")) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(1, eol == std::string_view::npos ? text.size() - 1 : eol - 1);
    text.remove_prefix(eol == std::string_view::npos ? text.size() : eol + 1);
    if (line.ends_with('\r')) line.remove_suffix(1);
    CsvTable meta = parse_csv(line, source);
    const auto& f = meta.header;
    if (f.empty()) continue;
    if (f[0] == "nnfuse-encoded") {
      if (f.size() != 2 || f[1] != "1") fail(ErrorKind::kParse, source + ": unsupported encoded format version");
      have_magic = true;
    } else if (f[0] == "survey" && f.size() == 2) {
      ds.survey_id = f[1];
    } else if (f[0] == "year" && f.size() == 2) {
      auto y = parse_double(f[1]);
      if (!y) fail(ErrorKind::kParse, source + ": bad year '" + f[1] + "'");
      ds.year = static_cast<int>(*y);
    } else if (f[0] == "dictionary_hash" && f.size() == 2) {
      stored_hash = f[1];
    } else if (f[0] == "feature" && f.size() >= 2) {
      groups.emplace_back(f[1], std::vector<std::string>(f.begin() + 2, f.end()));
    } else {
      fail(ErrorKind::kParse, source + ": unknown metadata line '#" + std::string(line) + "'");
    }
  }
  if (!have_magic) fail(ErrorKind::kParse, source + ": not an nnfuse encoded dataset");
  try {
    ds.dictionary = FeatureDictionary::from_groups(groups);
  } catch (const Error& e) {
    fail(ErrorKind::kParse, source + ": " + e.what());
  }
  if (ds.dictionary.hash() != stored_hash) {
    fail(ErrorKind::kDictionaryMismatch, source + ": embedded dictionary hash " + stored_hash +
                                             " does not match dictionary (" +
                                             ds.dictionary.hash() + ")");
  }

  CsvTable body = parse_csv(text, source);
  if (body.header != std::vector<std::string>{"household_id", "x", "y"}) {
    fail(ErrorKind::kParse, source + ": expected header household_id,x,y");
  }
  ds.samples.reserve(body.rows.size());
  for (std::size_t r = 0; r < body.rows.size(); ++r) {
    const auto& row = body.rows[r];
    EncodedSample s;
    s.household_id = row[0];
    try {
      s.x = BitVector::from_string(row[1]);
    } catch (const Error& e) {
      fail(ErrorKind::kParse, source + ": sample " + std::to_string(r) + ": " + e.what());
    }
    if (s.x.size() != ds.dictionary.dimension()) {
      fail(ErrorKind::kParse, source + ": sample " + std::to_string(r) + " has " +
                                  std::to_string(s.x.size()) + " bits, expected " +
                                  std::to_string(ds.dictionary.dimension()));
    }
    if (!row[2].empty()) {
      auto y = parse_double(row[2]);
      if (!y || *y < 0.0) fail(ErrorKind::kParse, source + ": sample " + std::to_string(r) + " has invalid y '" + row[2] + "'");
      s.y = *y;
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline EncodedDataset load_dataset(const std::filesystem::path& path) {
  return parse_dataset(read_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Descriptive statistics

struct FeatureSummary {
  std::string name;
  std::vector<std::string> categories;
  std::vector<std::size_t> counts;  // per category
  std::size_t missing = 0;
};

struct DatasetSummary {
  std::string survey_id;
  int year = 0;
  std::size_t households = 0;
  std::size_t samples = 0;
  std::size_t missing_y = 0;
  double missing_fraction = 0.0;
  int missing_percent = 0;  // floor(100 * missing / samples)
  std::vector<FeatureSummary> features;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["survey_id"] = survey_id;
    j["year"] = year;
    j["households"] = households;
    j["samples"] = samples;
    j["missing_y"] = missing_y;
    j["missing_fraction"] = missing_fraction;
    j["missing_percent"] = missing_percent;
    j["sample_grain"] = "person-day; household totals aggregate every sample";
    auto& fs = j["features"] = nlohmann::json::array();
    for (const auto& f : features) {
      nlohmann::json fj;
      fj["name"] = f.name;
      for (std::size_t c = 0; c < f.categories.size(); ++c) {
        fj["counts"][f.categories[c]] = f.counts[c];
      }
      fj["counts"]["Missing"] = f.missing;
      fs.push_back(std::move(fj));
    }
    return j;
  }
};

inline DatasetSummary describe(const EncodedDataset& ds) {
  DatasetSummary out;
  out.survey_id = ds.survey_id;
  out.year = ds.year;
  out.samples = ds.size();
  std::set<std::string_view> households;
  for (const auto& s : ds.samples) {
    households.insert(s.household_id);
    out.missing_y += !s.y.has_value();
  }
  out.households = households.size();
  if (out.samples > 0) {
    out.missing_fraction = static_cast<double>(out.missing_y) / static_cast<double>(out.samples);
    out.missing_percent = static_cast<int>((100 * out.missing_y) / out.samples);
  }
  for (const auto& g : ds.dictionary.groups()) {
    FeatureSummary fs{g.name, g.categories, std::vector<std::size_t>(g.width(), 0), 0};
    for (const auto& s : ds.samples) {
      bool found = false;
      for (std::size_t c = 0; c < g.width(); ++c) {
        if (s.x.test(g.offset + c)) {
          ++fs.counts[c];
          found = true;
          break;
        }
      }
      fs.missing += !found;
    }
    out.features.push_back(std::move(fs));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Household totals CSV: household_id,y_total

inline std::string serialize_totals(const HouseholdTotals& totals) {
  std::string out = "household_id,y_total\n";
  for (const auto& [hh, y] : totals) {
    out += csv_escape(hh) + "," + format_double(y) + "\n";
  }
  return out;
}

inline HouseholdTotals load_totals(const std::filesystem::path& path) {
  CsvTable t = read_csv(path);
  const std::size_t hc = t.column("household_id");
  const std::size_t yc = t.column("y_total");
  HouseholdTotals totals;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    auto y = parse_double(t.rows[r][yc]);
    if (!y) {
      fail(ErrorKind::kParse, path.string() + ": row " + std::to_string(r + 2) +
                                  " has non-numeric y_total");
    }
    if (!totals.emplace(t.rows[r][hc], *y).second) {
      fail(ErrorKind::kParse, path.string() + ": duplicate household '" + t.rows[r][hc] + "'");
    }
  }
  return totals;
}

}  // namespace nnfuse
