#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nnfuse/dataset.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/io.hpp"
#include "nnfuse/schema.hpp"

namespace nnfuse {

struct TablePaths {
  std::filesystem::path households;
  std::filesystem::path persons;
  std::filesystem::path days;
};

/// Household, person and travel-day tables of one survey, with their key
/// indices. Referential integrity holds after construction.
struct RawTableSet {
  std::string survey_id;
  SurveyKeys keys;
  CsvTable households;
  CsvTable persons;
  CsvTable days;

  std::map<std::string, std::size_t, std::less<>> household_row;
  std::map<std::pair<std::string, std::string>, std::size_t> person_row;

  static RawTableSet build(std::string survey_id, SurveyKeys keys, CsvTable households,
                           CsvTable persons, CsvTable days) {
    RawTableSet raw{std::move(survey_id), std::move(keys), std::move(households),
                    std::move(persons), std::move(days), {}, {}};
    raw.index();
    return raw;
  }

 private:
  void index() {
    const std::size_t h_hh = households.column(keys.household_id);
    for (std::size_t r = 0; r < households.rows.size(); ++r) {
      const auto& id = households.rows[r][h_hh];
      if (id.empty()) fail(ErrorKind::kParse, households.source + ": row " + std::to_string(r + 2) + " has an empty household id");
      if (!household_row.emplace(id, r).second) {
        fail(ErrorKind::kParse, households.source + ": row " + std::to_string(r + 2) +
                                    " duplicates household '" + id + "'");
      }
    }
    const std::size_t p_hh = persons.column(keys.household_id);
    const std::size_t p_id = persons.column(keys.person_id);
    for (std::size_t r = 0; r < persons.rows.size(); ++r) {
      const auto& row = persons.rows[r];
      if (!household_row.contains(row[p_hh])) {
        fail(ErrorKind::kParse, persons.source + ": row " + std::to_string(r + 2) +
                                    " references unknown household '" + row[p_hh] + "'");
      }
      if (!person_row.emplace(std::pair{row[p_hh], row[p_id]}, r).second) {
        fail(ErrorKind::kParse, persons.source + ": row " + std::to_string(r + 2) +
                                    " duplicates person '" + row[p_id] + "'");
      }
    }
    const std::size_t d_hh = days.column(keys.household_id);
    const std::size_t d_p = days.column(keys.person_id);
    days.column(keys.day_id);
    for (std::size_t r = 0; r < days.rows.size(); ++r) {
      const auto& row = days.rows[r];
      if (!person_row.contains(std::pair{row[d_hh], row[d_p]})) {
        fail(ErrorKind::kParse, days.source + ": row " + std::to_string(r + 2) +
                                    " references unknown person '" + row[d_p] +
                                    "' of household '" + row[d_hh] + "'");
      }
    }
  }
};

inline RawTableSet load_tables(const TablePaths& paths, std::string survey_id,
                               const SurveyKeys& keys) {
  return RawTableSet::build(std::move(survey_id), keys, read_csv(paths.households),
                            read_csv(paths.persons), read_csv(paths.days));
}

namespace detail {

inline const CsvTable& table_at(const RawTableSet& raw, Level level) {
  switch (level) {
    case Level::kHousehold: return raw.households;
    case Level::kPerson: return raw.persons;
    case Level::kDay: return raw.days;
  }
  return raw.days;
}

}  // namespace detail

/// Joins day rows with their person and household rows and encodes one
/// sample per day row, in day-table order.
inline EncodedDataset assemble(const RawTableSet& raw, const HarmonizationSpec& spec, int year) {
  const FeatureDictionary dict = build_dictionary(spec);
  const std::string& survey = raw.survey_id;

  struct BoundFeature {
    const FeatureSpec* spec;
    Level level;
    std::size_t column;
    std::size_t offset;
  };
  std::vector<BoundFeature> bound;
  for (std::size_t g = 0; g < spec.features.size(); ++g) {
    const FeatureSpec& f = spec.features[g];
    auto it = f.per_survey.find(survey);
    if (it == f.per_survey.end()) {
      fail(ErrorKind::kMapping, "feature '" + f.name + "' has no mapping for survey '" + survey + "'");
    }
    bound.push_back({&f, it->second.table,
                     detail::table_at(raw, it->second.table).column(it->second.column),
                     dict.groups()[g].offset});
  }

  auto tit = spec.target.per_survey.find(survey);
  if (tit == spec.target.per_survey.end()) {
    fail(ErrorKind::kMapping, "target has no source for survey '" + survey + "'");
  }
  const TargetSource& target = tit->second;
  std::vector<std::size_t> target_cols;
  for (const auto& c : target.columns) {
    target_cols.push_back(detail::table_at(raw, target.table).column(c));
  }

  const std::size_t d_hh = raw.days.column(raw.keys.household_id);
  const std::size_t d_p = raw.days.column(raw.keys.person_id);

  EncodedDataset ds{dict, survey, year, {}};
  ds.samples.reserve(raw.days.rows.size());
  for (std::size_t r = 0; r < raw.days.rows.size(); ++r) {
    const auto& day = raw.days.rows[r];
    const std::size_t hrow = raw.household_row.find(day[d_hh])->second;
    const std::size_t prow = raw.person_row.find(std::pair{day[d_hh], day[d_p]})->second;
    auto row_of = [&](Level level) -> const std::vector<std::string>& {
      switch (level) {
        case Level::kHousehold: return raw.households.rows[hrow];
        case Level::kPerson: return raw.persons.rows[prow];
        case Level::kDay: return day;
      }
      return day;
    };

    EncodedSample s{day[d_hh], BitVector(dict.dimension()), std::nullopt};
    for (const auto& b : bound) {
      const std::string& value = row_of(b.level)[b.column];
      if (auto idx = resolve_category(*b.spec, survey, value)) s.x.set(b.offset + *idx);
    }

    const auto& trow = row_of(target.table);
    std::optional<double> sum = 0.0;
    for (std::size_t k = 0; k < target_cols.size(); ++k) {
      const std::string& v = trow[target_cols[k]];
      if (v.empty() || target.missing_values.contains(v)) {
        sum.reset();
        break;
      }
      auto parsed = parse_double(v);
      if (!parsed) {
        fail(ErrorKind::kParse, detail::table_at(raw, target.table).source + ": non-numeric delivery value '" + v +
                                    "' in column '" + target.columns[k] + "'");
      }
      *sum += *parsed;
    }
    try {
      s.y = harmonize_target(sum, target.divisor);
    } catch (const Error& e) {
      fail(e.kind(), raw.days.source + ": row " + std::to_string(r + 2) + ": " + e.what());
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace nnfuse
