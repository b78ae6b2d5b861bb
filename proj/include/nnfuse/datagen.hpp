#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "nnfuse/dataset.hpp"
#include "nnfuse/error.hpp"
#include "nnfuse/rng.hpp"
#include "nnfuse/schema.hpp"

namespace nnfuse {

struct ModelFeature {
  std::string name;
  Level level = Level::kPerson;  // household features are shared by all members
  std::vector<std::string> categories;
  std::vector<double> marginals;
  std::vector<double> propensity;  // multiplicative factor per category
  double missing_rate = 0.0;       // probability the feature is unreported
};

/// Synthetic population with a planted delivery propensity. A sample's
/// expected deliveries/day is
///   base_rate * spike_factor * prod_f propensity_f[category_f]
/// with missing features contributing a factor of 1; observed counts are
/// Poisson with that mean.
struct PopulationModel {
  std::vector<ModelFeature> features;
  double base_rate = 0.3;
  double spike_factor = 1.0;
  double missingness = 0.0;  // probability a sample's y is withheld
  std::vector<double> persons_per_household{1.0};  // P(1 person), P(2), ...
  std::vector<double> days_per_person{1.0};         // P(1 day), P(2), ...

  void validate() const {
    auto check_distribution = [](const std::vector<double>& p, const std::string& what) {
      if (p.empty()) fail(ErrorKind::kSchema, what + " is empty");
      double sum = 0.0;
      for (double v : p) {
        if (!(v >= 0.0)) fail(ErrorKind::kSchema, what + " has a negative entry");
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-9) fail(ErrorKind::kSchema, what + " does not sum to 1");
    };
    if (features.empty()) fail(ErrorKind::kSchema, "population model has no features");
    for (const auto& f : features) {
      if (f.level == Level::kDay) fail(ErrorKind::kSchema, "feature '" + f.name + "' must be household or person level");
      if (f.categories.size() < 2) fail(ErrorKind::kSchema, "feature '" + f.name + "' needs at least 2 categories");
      if (f.marginals.size() != f.categories.size() || f.propensity.size() != f.categories.size()) {
        fail(ErrorKind::kSchema, "feature '" + f.name + "' marginals/propensity size mismatch");
      }
      check_distribution(f.marginals, "marginals of '" + f.name + "'");
      for (double p : f.propensity) {
        if (!(p >= 0.0)) fail(ErrorKind::kSchema, "feature '" + f.name + "' has negative propensity");
      }
      if (!(f.missing_rate >= 0.0 && f.missing_rate <= 1.0)) {
        fail(ErrorKind::kSchema, "feature '" + f.name + "' missing_rate outside [0,1]");
      }
    }
    if (!(base_rate >= 0.0)) fail(ErrorKind::kSchema, "base_rate must be >= 0");
    if (!(spike_factor > 0.0)) fail(ErrorKind::kSchema, "spike_factor must be > 0");
    if (!(missingness >= 0.0 && missingness <= 1.0)) fail(ErrorKind::kSchema, "missingness outside [0,1]");
    check_distribution(persons_per_household, "persons_per_household");
    check_distribution(days_per_person, "days_per_person");
  }

  FeatureDictionary dictionary() const {
    std::vector<std::pair<std::string, std::vector<std::string>>> groups;
    for (const auto& f : features) groups.emplace_back(f.name, f.categories);
    return FeatureDictionary::from_groups(groups);
  }
};

/// The six harmonized covariates (26 one-hot columns) with marginals close
/// to the PSRC 2017 composition and a planted propensity in which income,
/// age and employment matter most.
inline PopulationModel default_population_model() {
  PopulationModel m;
  m.base_rate = 0.35;
  m.persons_per_household = {0.30, 0.38, 0.17, 0.15};
  m.days_per_person = {0.25, 0.25, 0.25, 0.25};
  m.features = {
      {"Income", Level::kHousehold, {">100k", "75-100k", "<75k"}, {0.47, 0.15, 0.38}, {2.2, 1.1, 0.45}, 0.07},
      {"Age", Level::kPerson, {"<25", "25-45", "45-65", ">65"}, {0.19, 0.46, 0.23, 0.12}, {0.7, 1.6, 1.0, 0.5}, 0.0},
      {"Education",
       Level::kPerson,
       {"<high school", "High school grad", "Technical training", "Associate degree", "Bachelor degree", "Graduate degree"},
       {0.05, 0.08, 0.04, 0.13, 0.40, 0.30},
       {0.6, 0.7, 0.8, 0.9, 1.15, 1.3},
       0.14},
      {"Gender", Level::kPerson, {"Female", "Male"}, {0.5, 0.5}, {1.15, 0.87}, 0.02},
      {"LifeCycle",
       Level::kHousehold,
       {"2 adults, no children", "1 adult, no children", "1 adult, with children", "2 adults, with children"},
       {0.40, 0.28, 0.12, 0.20},
       {1.0, 0.8, 1.2, 1.5},
       0.0},
      {"Employment",
       Level::kPerson,
       {"Full time", "Retired", "Part time", "Freelancer", "Not employed", "Homemaker", "Volunteer"},
       {0.62, 0.13, 0.08, 0.06, 0.05, 0.05, 0.01},
       {1.3, 0.5, 1.0, 1.4, 0.6, 1.2, 0.8},
       0.14},
  };
  return m;
}

inline PopulationModel model_from_json(const nlohmann::json& j) {
  PopulationModel m;
  try {
    if (j.at("version").get<int>() != 1) fail(ErrorKind::kSchema, "unsupported model version");
    m.base_rate = j.value("base_rate", m.base_rate);
    m.spike_factor = j.value("spike_factor", m.spike_factor);
    m.missingness = j.value("missingness", m.missingness);
    m.persons_per_household = j.value("persons_per_household", m.persons_per_household);
    m.days_per_person = j.value("days_per_person", m.days_per_person);
    for (const auto& fj : j.at("features")) {
      ModelFeature f;
      f.name = fj.at("name").get<std::string>();
      f.level = parse_level(fj.value("level", "person"));
      f.categories = fj.at("categories").get<std::vector<std::string>>();
      f.marginals = fj.at("marginals").get<std::vector<double>>();
      f.propensity = fj.at("propensity").get<std::vector<double>>();
      f.missing_rate = fj.value("missing_rate", 0.0);
      m.features.push_back(std::move(f));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kSchema, std::string("malformed population model: ") + e.what());
  }
  m.validate();
  return m;
}

inline nlohmann::json model_to_json(const PopulationModel& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["base_rate"] = m.base_rate;
  j["spike_factor"] = m.spike_factor;
  j["missingness"] = m.missingness;
  j["persons_per_household"] = m.persons_per_household;
  j["days_per_person"] = m.days_per_person;
  for (const auto& f : m.features) {
    j["features"].push_back({{"name", f.name},
                             {"level", to_string(f.level)},
                             {"categories", f.categories},
                             {"marginals", f.marginals},
                             {"propensity", f.propensity},
                             {"missing_rate", f.missing_rate}});
  }
  return j;
}

inline PopulationModel load_model(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorKind::kParse, path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

struct GeneratedSurvey {
  EncodedDataset full;          // every y present: the oracle truth
  EncodedDataset with_missing;  // same samples, y withheld at the missingness rate
};

/// Draws households from the model with a single stream seeded by `seed`.
/// The withholding draw is made for every sample, so the full dataset is the
/// same for every missingness setting.
inline GeneratedSurvey generate(const PopulationModel& model, std::size_t n_households,
                                const std::string& survey_id, int year, std::uint64_t seed) {
  model.validate();
  const FeatureDictionary dict = model.dictionary();
  auto eng = rng::make_stream(seed, 0);

  GeneratedSurvey out;
  out.full = {dict, survey_id, year, {}};
  out.with_missing = {dict, survey_id, year, {}};

  const std::size_t n_features = model.features.size();
  std::vector<std::optional<std::size_t>> category(n_features);
  auto draw_feature = [&](std::size_t f) {
    const auto& mf = model.features[f];
    const std::size_t c = rng::categorical(eng, mf.marginals);
    const bool missing = rng::uniform_unit(eng) < mf.missing_rate;
    category[f] = missing ? std::nullopt : std::optional<std::size_t>(c);
  };

  for (std::size_t h = 0; h < n_households; ++h) {
    const std::string hh_id = "h" + std::to_string(h + 1);
    for (std::size_t f = 0; f < n_features; ++f) {
      if (model.features[f].level == Level::kHousehold) draw_feature(f);
    }
    const std::size_t persons = rng::categorical(eng, model.persons_per_household) + 1;
    for (std::size_t p = 0; p < persons; ++p) {
      for (std::size_t f = 0; f < n_features; ++f) {
        if (model.features[f].level == Level::kPerson) draw_feature(f);
      }
      BitVector x(dict.dimension());
      double rate = model.base_rate * model.spike_factor;
      for (std::size_t f = 0; f < n_features; ++f) {
        if (category[f]) {
          x.set(dict.groups()[f].offset + *category[f]);
          rate *= model.features[f].propensity[*category[f]];
        }
      }
      const std::size_t days = rng::categorical(eng, model.days_per_person) + 1;
      for (std::size_t d = 0; d < days; ++d) {
        const double y = static_cast<double>(rng::poisson(eng, rate));
        const bool withheld = rng::uniform_unit(eng) < model.missingness;
        out.full.samples.push_back({hh_id, x, y});
        out.with_missing.samples.push_back(
            {hh_id, x, withheld ? std::nullopt : std::optional<double>(y)});
      }
    }
  }
  return out;
}

}  // namespace nnfuse
