#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nnfuse/bitvector.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/io.hpp"

namespace nnfuse {

/// Survey table a column lives in.
enum class Level { kHousehold, kPerson, kDay };

inline Level parse_level(std::string_view s) {
  if (s == "household") return Level::kHousehold;
  if (s == "person") return Level::kPerson;
  if (s == "day") return Level::kDay;
  fail(ErrorKind::kSchema, "unknown table level '" + std::string(s) + "'");
}

inline const char* to_string(Level level) {
  switch (level) {
    case Level::kHousehold: return "household";
    case Level::kPerson: return "person";
    case Level::kDay: return "day";
  }
  return "?";
}

/// Lower-inclusive numeric bin; an absent lower bound means -infinity.
struct NumericBin {
  std::optional<double> lower;
  std::string category;
};

/// How one survey's raw column maps onto a harmonized feature. Explicit
/// `values` are consulted first (a null target means "missing"); numeric raw
/// values not listed there fall into `bins`.
struct ColumnMapping {
  Level table = Level::kPerson;
  std::string column;
  std::map<std::string, std::optional<std::string>, std::less<>> values;
  std::vector<NumericBin> bins;
};

struct FeatureSpec {
  std::string name;
  std::vector<std::string> categories;
  std::map<std::string, ColumnMapping, std::less<>> per_survey;

  std::optional<std::size_t> category_index(std::string_view label) const {
    for (std::size_t i = 0; i < categories.size(); ++i) {
      if (categories[i] == label) return i;
    }
    return std::nullopt;
  }
};

struct TargetSource {
  Level table = Level::kDay;
  std::vector<std::string> columns;  // summed
  double divisor = 1.0;
  std::set<std::string, std::less<>> missing_values;
};

struct TargetSpec {
  std::string name = "Delivery";
  std::map<std::string, TargetSource, std::less<>> per_survey;
};

struct SurveyKeys {
  std::string household_id;
  std::string person_id;
  std::string day_id;
};

struct HarmonizationSpec {
  int version = 1;
  std::vector<FeatureSpec> features;
  TargetSpec target;
  std::map<std::string, SurveyKeys, std::less<>> surveys;

  const SurveyKeys& keys(std::string_view survey) const {
    auto it = surveys.find(survey);
    if (it == surveys.end()) {
      fail(ErrorKind::kSchema, "spec has no survey '" + std::string(survey) + "'");
    }
    return it->second;
  }

  void validate() const {
    if (version != 1) {
      fail(ErrorKind::kSchema, "unsupported spec version " + std::to_string(version));
    }
    if (features.empty()) fail(ErrorKind::kSchema, "spec lists no features");
    std::set<std::string, std::less<>> names;
    for (const auto& f : features) {
      if (f.name.empty()) fail(ErrorKind::kSchema, "feature with empty name");
      if (!names.insert(f.name).second) {
        fail(ErrorKind::kSchema, "duplicate feature '" + f.name + "'");
      }
      if (f.categories.size() < 2) {
        fail(ErrorKind::kSchema, "feature '" + f.name + "' needs at least 2 categories");
      }
      std::set<std::string, std::less<>> cats;
      for (const auto& c : f.categories) {
        if (!cats.insert(c).second) {
          fail(ErrorKind::kSchema,
               "duplicate category '" + c + "' in feature '" + f.name + "'");
        }
      }
      for (const auto& [survey, m] : f.per_survey) {
        const std::string where = "feature '" + f.name + "', survey '" + survey + "'";
        if (m.column.empty()) fail(ErrorKind::kSchema, where + ": empty column name");
        if (m.table == Level::kDay) {
          fail(ErrorKind::kSchema, where + ": covariates must come from household or person tables");
        }
        for (const auto& [raw, target] : m.values) {
          if (target && !f.category_index(*target)) {
            fail(ErrorKind::kSchema, where + ": value '" + raw +
                                         "' maps to unknown category '" + *target + "'");
          }
        }
        for (std::size_t i = 0; i < m.bins.size(); ++i) {
          if (!f.category_index(m.bins[i].category)) {
            fail(ErrorKind::kSchema, where + ": bin maps to unknown category '" +
                                         m.bins[i].category + "'");
          }
          if (i > 0 && !m.bins[i].lower) {
            fail(ErrorKind::kSchema, where + ": only the first bin may be unbounded");
          }
          if (i > 0 && m.bins[i - 1].lower && *m.bins[i].lower <= *m.bins[i - 1].lower) {
            fail(ErrorKind::kSchema, where + ": bin lower bounds must be strictly ascending");
          }
        }
      }
    }
    for (const auto& [survey, t] : target.per_survey) {
      if (!(t.divisor > 0.0)) {
        fail(ErrorKind::kSchema, "target divisor for survey '" + survey + "' must be > 0");
      }
      if (t.columns.empty()) {
        fail(ErrorKind::kSchema, "target for survey '" + survey + "' lists no columns");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Feature dictionary

/// One feature's contiguous block of one-hot columns.
struct FeatureGroup {
  std::string name;
  std::vector<std::string> categories;
  std::size_t offset = 0;

  std::size_t width() const noexcept { return categories.size(); }
};

/// Ordered one-hot column layout: column i is bit position i.
class FeatureDictionary {
 public:
  FeatureDictionary() = default;

  /// Builds the layout from (feature, categories) pairs in order.
  static FeatureDictionary from_groups(
      const std::vector<std::pair<std::string, std::vector<std::string>>>& groups) {
    FeatureDictionary dict;
    std::set<std::string, std::less<>> names;
    for (const auto& [name, cats] : groups) {
      if (!names.insert(name).second) {
        fail(ErrorKind::kSchema, "duplicate feature '" + name + "'");
      }
      std::set<std::string, std::less<>> seen;
      for (const auto& c : cats) {
        if (!seen.insert(c).second) {
          fail(ErrorKind::kSchema, "duplicate category '" + c + "' in feature '" + name + "'");
        }
      }
      dict.groups_.push_back({name, cats, dict.dimension_});
      dict.dimension_ += cats.size();
    }
    return dict;
  }

  std::size_t dimension() const noexcept { return dimension_; }
  const std::vector<FeatureGroup>& groups() const noexcept { return groups_; }
  std::size_t group_count() const noexcept { return groups_.size(); }

  std::optional<std::size_t> find_group(std::string_view name) const {
    for (std::size_t g = 0; g < groups_.size(); ++g) {
      if (groups_[g].name == name) return g;
    }
    return std::nullopt;
  }

  /// Column label, e.g. "Income_>100k".
  std::string column_name(std::size_t bit) const {
    for (const auto& g : groups_) {
      if (bit >= g.offset && bit < g.offset + g.width()) {
        return g.name + "_" + g.categories[bit - g.offset];
      }
    }
    fail(ErrorKind::kDimension, "column " + std::to_string(bit) + " out of range");
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> out;
    out.reserve(dimension_);
    for (const auto& g : groups_) {
      for (const auto& c : g.categories) out.push_back(g.name + "_" + c);
    }
    return out;
  }

  /// 64-bit FNV-1a over the canonical layout, as 16 hex digits. Equal hashes
  /// mean coordinate-compatible encodings.
  std::string hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::string_view s) {
      for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    };
    for (const auto& g : groups_) {
      mix(g.name);
      mix("\x1f");
      for (const auto& c : g.categories) {
        mix(c);
        mix("\x1f");
      }
      mix("\x1e");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
      out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
      h >>= 4;
    }
    return out;
  }

  friend bool operator==(const FeatureDictionary& a, const FeatureDictionary& b) {
    if (a.groups_.size() != b.groups_.size()) return false;
    for (std::size_t i = 0; i < a.groups_.size(); ++i) {
      if (a.groups_[i].name != b.groups_[i].name ||
          a.groups_[i].categories != b.groups_[i].categories) {
        return false;
      }
    }
    return true;
  }

 private:
  std::vector<FeatureGroup> groups_;
  std::size_t dimension_ = 0;
};

inline FeatureDictionary build_dictionary(const HarmonizationSpec& spec) {
  spec.validate();
  std::vector<std::pair<std::string, std::vector<std::string>>> groups;
  groups.reserve(spec.features.size());
  for (const auto& f : spec.features) groups.emplace_back(f.name, f.categories);
  return FeatureDictionary::from_groups(groups);
}

// ---------------------------------------------------------------------------
// Encoding

/// Harmonized category index for a raw value, or nullopt for missing. An
/// empty raw string is always missing.
inline std::optional<std::size_t> resolve_category(const FeatureSpec& feature,
                                                   std::string_view survey,
                                                   std::optional<std::string_view> raw) {
  if (!raw || raw->empty()) return std::nullopt;
  auto ms = feature.per_survey.find(survey);
  if (ms == feature.per_survey.end()) {
    fail(ErrorKind::kMapping, "feature '" + feature.name + "' has no mapping for survey '" +
                                  std::string(survey) + "'");
  }
  const ColumnMapping& m = ms->second;
  if (auto it = m.values.find(*raw); it != m.values.end()) {
    if (!it->second) return std::nullopt;
    return feature.category_index(*it->second);
  }
  if (!m.bins.empty()) {
    if (auto v = parse_double(*raw)) {
      for (std::size_t i = m.bins.size(); i-- > 0;) {
        if (!m.bins[i].lower || *v >= *m.bins[i].lower) {
          return feature.category_index(m.bins[i].category);
        }
      }
    }
  }
  fail(ErrorKind::kMapping, "unmapped value '" + std::string(*raw) + "' in survey '" +
                                std::string(survey) + "', column '" + m.column +
                                "' (feature '" + feature.name + "')");
}

/// One-hot group for a raw value: exactly one bit for a mapped category, all
/// zeros for missing.
inline BitVector encode_value(const FeatureSpec& feature, std::string_view survey,
                              std::optional<std::string_view> raw) {
  BitVector bits(feature.categories.size());
  if (auto idx = resolve_category(feature, survey, raw)) bits.set(*idx);
  return bits;
}

/// Category label of each feature group in x; nullopt for an all-zero group.
inline std::vector<std::optional<std::string>> decode_categories(const FeatureDictionary& dict,
                                                                 const BitVector& x) {
  std::vector<std::optional<std::string>> out;
  out.reserve(dict.group_count());
  for (const auto& g : dict.groups()) {
    std::optional<std::string> label;
    for (std::size_t c = 0; c < g.width(); ++c) {
      if (x.test(g.offset + c)) {
        label = g.categories[c];
        break;
      }
    }
    out.push_back(std::move(label));
  }
  return out;
}

/// Converts a raw delivery count to deliveries/day.
inline std::optional<double> harmonize_target(std::optional<double> raw, double divisor) {
  if (!(divisor > 0.0)) fail(ErrorKind::kSchema, "target divisor must be > 0");
  if (!raw) return std::nullopt;
  if (*raw < 0.0) {
    fail(ErrorKind::kData, "negative delivery count " + format_double(*raw));
  }
  return *raw / divisor;
}

// ---------------------------------------------------------------------------
// JSON form

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& j, const char* key,
                                     const std::string& where) {
  if (!j.is_object() || !j.contains(key)) {
    fail(ErrorKind::kSchema, where + ": missing '" + key + "'");
  }
  return j.at(key);
}

}  // namespace detail

inline HarmonizationSpec spec_from_json(const nlohmann::json& j) {
  using detail::require;
  HarmonizationSpec spec;
  try {
    spec.version = require(j, "version", "spec").get<int>();
    for (const auto& [survey, keys] : require(j, "surveys", "spec").items()) {
      const std::string where = "survey '" + survey + "'";
      spec.surveys[survey] = {require(keys, "household_id", where).get<std::string>(),
                              require(keys, "person_id", where).get<std::string>(),
                              require(keys, "day_id", where).get<std::string>()};
    }
    const auto& target = require(j, "target", "spec");
    spec.target.name = target.value("name", "Delivery");
    for (const auto& [survey, src] : require(target, "sources", "target").items()) {
      const std::string where = "target source '" + survey + "'";
      TargetSource t;
      t.table = parse_level(require(src, "table", where).get<std::string>());
      t.columns = require(src, "columns", where).get<std::vector<std::string>>();
      t.divisor = src.value("divisor", 1.0);
      for (const auto& mv : src.value("missing_values", nlohmann::json::array())) {
        t.missing_values.insert(mv.get<std::string>());
      }
      spec.target.per_survey[survey] = std::move(t);
    }
    for (const auto& fj : require(j, "features", "spec")) {
      FeatureSpec f;
      f.name = require(fj, "name", "feature").get<std::string>();
      const std::string where = "feature '" + f.name + "'";
      f.categories = require(fj, "categories", where).get<std::vector<std::string>>();
      const nlohmann::json sources = fj.value("sources", nlohmann::json::object());
      for (const auto& [survey, mj] : sources.items()) {
        const std::string mwhere = where + ", survey '" + survey + "'";
        ColumnMapping m;
        m.table = parse_level(require(mj, "table", mwhere).get<std::string>());
        m.column = require(mj, "column", mwhere).get<std::string>();
        const nlohmann::json values = mj.value("values", nlohmann::json::object());
        for (const auto& [raw, cat] : values.items()) {
          m.values[raw] = cat.is_null() ? std::nullopt
                                        : std::optional<std::string>(cat.get<std::string>());
        }
        for (const auto& bin : mj.value("bins", nlohmann::json::array())) {
          if (!bin.is_array() || bin.size() != 2) {
            fail(ErrorKind::kSchema, mwhere + ": bins must be [lower|null, category] pairs");
          }
          m.bins.push_back({bin[0].is_null() ? std::nullopt
                                             : std::optional<double>(bin[0].get<double>()),
                            bin[1].get<std::string>()});
        }
        f.per_survey[survey] = std::move(m);
      }
      spec.features.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed harmonization spec: ") + e.what());
  }
  spec.validate();
  return spec;
}

inline HarmonizationSpec load_spec(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  return spec_from_json(j);
}

}  // namespace nnfuse
