// nnfuse command-line driver.
//
// Exit codes:
//   0  success
//   1  unexpected internal error
//   2  usage error (unknown flag, missing required flag or --seed)
//   3  input file missing or unreadable
//   4  malformed input (CSV, JSON, encoded dataset)
//   5  invalid harmonization spec or population model
//   6  raw value without a harmonized category
//   7  dictionary hash mismatch between inputs
//   8  data precondition violated (negative counts, no labeled samples)
//   9  bit-vector dimension mismatch
//  10  matching precondition violated (empty inputs)
//  11  invalid parameter value

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <openssl/evp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "nnfuse/nnfuse.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int exit_code(nnfuse::ErrorKind kind) {
  using nnfuse::ErrorKind;
  switch (kind) {
    case ErrorKind::kIo: return 3;
    case ErrorKind::kParse: return 4;
    case ErrorKind::kSchema: return 5;
    case ErrorKind::kMapping: return 6;
    case ErrorKind::kDictionaryMismatch: return 7;
    case ErrorKind::kData: return 8;
    case ErrorKind::kDimension: return 9;
    case ErrorKind::kMatch: return 10;
    case ErrorKind::kArgument: return 11;
  }
  return 1;
}

std::string sha256_file(const fs::path& path) {
  const std::string data = nnfuse::read_file(path);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// State shared by one subcommand invocation.
struct Run {
  std::string command;
  nnfuse::OutputBatch outputs;
  std::vector<fs::path> inputs;
  json report = json::object();
  std::optional<std::uint64_t> seed;
  fs::path manifest;  // empty: print the manifest to stderr
  std::size_t threads = 1;

  void input(const fs::path& p) {
    if (!fs::exists(p)) nnfuse::fail(nnfuse::ErrorKind::kIo, "input file not found: " + p.string());
    inputs.push_back(p);
  }
  void output(const fs::path& p, std::string content, bool primary = false) {
    if (primary) manifest = fs::path(p.string() + ".manifest.json");
    outputs.add(p, std::move(content));
  }
};

json option_values(const CLI::App* app) {
  json params = json::object();
  for (const CLI::Option* opt : app->get_options()) {
    const std::string key = opt->get_single_name();
    if (key.empty() || key == "help" || key == "config") continue;
    const bool flag = opt->get_items_expected_max() == 0;
    if (opt->count() > 0) {
      const auto& res = opt->results();
      if (flag) {
        params[key] = true;
      } else if (res.size() == 1) {
        params[key] = res.front();
      } else {
        params[key] = res;
      }
    } else if (flag) {
      params[key] = false;
    } else {
      params[key] = opt->get_default_str();
    }
  }
  return params;
}

std::uint64_t require_seed(const std::optional<std::uint64_t>& seed, const std::string& command) {
  if (!seed) throw CLI::RequiredError("--seed is required for " + command);
  return *seed;
}

nnfuse::EncodedDataset load(Run& run, const fs::path& p) {
  run.input(p);
  return nnfuse::load_dataset(p);
}

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path base = out;
  if (base.extension() == ".csv" || base.extension() == ".enc") base.replace_extension();
  return fs::path(base.string() + suffix);
}

std::vector<std::size_t> parse_cutoffs(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto v = nnfuse::parse_double(item);
    if (!v || *v < 1 || *v != static_cast<double>(static_cast<std::size_t>(*v))) {
      nnfuse::fail(nnfuse::ErrorKind::kArgument, "invalid cutoff '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(*v));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nnfuse: nearest-neighbour survey data fusion"};
  app.set_config("--config", "", "Config file (TOML/INI) supplying any flag; flags override it");
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();

  Run run;
  run.threads = nnfuse::default_thread_count();
  app.add_option("--threads", run.threads, "Worker threads (results do not depend on it)")
      ->check(CLI::PositiveNumber);

  // ingest
  nnfuse::TablePaths tables;
  fs::path spec_path, out_path;
  std::string survey_id;
  int year = 0;
  auto* ingest = app.add_subcommand("ingest", "Join survey CSV tables and encode them");
  ingest->add_option("--households", tables.households, "Household table CSV")->required();
  ingest->add_option("--persons", tables.persons, "Person table CSV")->required();
  ingest->add_option("--days", tables.days, "Travel-day table CSV")->required();
  ingest->add_option("--spec", spec_path, "Harmonization spec (JSON)")->required();
  ingest->add_option("--survey-id", survey_id, "Survey id as named in the spec")->required();
  ingest->add_option("--year", year, "Survey year")->required();
  ingest->add_option("--out", out_path, "Encoded dataset output")->required();

  // describe
  fs::path data_path, totals_out;
  auto* describe = app.add_subcommand("describe", "Descriptive statistics of an encoded dataset");
  describe->add_option("--data", data_path, "Encoded dataset")->required();
  describe->add_option("--out", out_path, "JSON report (default: stdout)");
  describe->add_option("--totals-out", totals_out, "Household totals CSV of the labeled samples");

  // impute
  fs::path source_path, candidate_path, households_out, encoded_out;
  bool impute_all = false, per_household = false, use_index = false;
  std::string tie_break = "index", method = "nn";
  std::optional<std::uint64_t> seed;
  auto* impute = app.add_subcommand("impute", "Impute missing deliveries by nearest-neighbour matching");
  impute->add_option("--source", source_path, "Encoded dataset to impute")->required();
  impute->add_option("--candidate", candidate_path, "Encoded ground-truth dataset");
  impute->add_flag("--impute-all", impute_all, "Replace observed y as well");
  impute->add_option("--tie-break", tie_break, "index|random")->check(CLI::IsMember({"index", "random"}));
  impute->add_option("--seed", seed, "Seed for --tie-break random");
  impute->add_option("--method", method, "nn|mean (mean = baseline)")->check(CLI::IsMember({"nn", "mean"}));
  impute->add_flag("--per-household-weight", per_household, "Per-household weight instead of the global w");
  impute->add_flag("--use-index", use_index, "Popcount-pruned exact search");
  impute->add_option("--out", out_path, "Sample-level result CSV")->required();
  impute->add_option("--households-out", households_out, "Household totals CSV (default: <out>_households.csv)");
  impute->add_option("--out-encoded", encoded_out, "Imputed dataset in encoded form");

  // synthesize
  fs::path source2_path, source1_path, provenance_out;
  bool literal_norm = false;
  std::string norm = "reached";
  std::optional<int> out_year;
  auto* synth = app.add_subcommand("synthesize", "Synthesize a future-year candidate survey");
  synth->add_option("--source2", source2_path, "Encoded future-year source survey")->required();
  synth->add_option("--source1", source1_path, "Encoded base-year source survey")->required();
  synth->add_option("--candidate", candidate_path, "Encoded base-year candidate survey")->required();
  synth->add_flag("--literal-v2-norm", literal_norm, "Divide by |source1| instead of the matched sources");
  synth->add_option("--norm", norm, "reached|matched|all")->check(CLI::IsMember({"reached", "matched", "all"}));
  synth->add_option("--year", out_year, "Year of the synthetic dataset (default: source2 year)");
  synth->add_flag("--use-index", use_index, "Popcount-pruned exact search");
  synth->add_option("--out", out_path, "Synthetic encoded dataset")->required();
  synth->add_option("--provenance-out", provenance_out, "Provenance CSV (default: <out>_provenance.csv)");

  // evaluate
  fs::path imputed_path, truth_path, baseline_path, sorted_out;
  std::optional<std::size_t> subset_n;
  std::string cutoffs_text = "100,200,300,400,500";
  auto* evaluate = app.add_subcommand("evaluate", "Randomized household-subset comparison");
  evaluate->add_option("--imputed", imputed_path, "Imputed household totals CSV")->required();
  evaluate->add_option("--truth", truth_path, "Ground-truth household totals CSV")->required();
  evaluate->add_option("--n", subset_n, "Subset size (default: truth size)");
  evaluate->add_option("--cutoffs", cutoffs_text, "Comma-separated iteration cutoffs");
  evaluate->add_option("--seed", seed, "RNG seed");
  evaluate->add_option("--baseline", baseline_path, "Baseline household totals CSV to report alongside");
  evaluate->add_option("--sorted-out", sorted_out, "Plot-ready CSV of the first draw vs truth, sorted");
  evaluate->add_option("--out", out_path, "JSON report")->required();

  // spike
  fs::path a_path, b_path;
  std::size_t repeats = 1;
  auto* spike = app.add_subcommand("spike", "Sorted-MSE between two years' household totals");
  spike->add_option("--a", a_path, "Early-year household totals CSV")->required();
  spike->add_option("--b", b_path, "Late-year household totals CSV")->required();
  spike->add_option("--n", subset_n, "Subset size")->required();
  spike->add_option("--seed", seed, "RNG seed");
  spike->add_option("--repeats", repeats, "Number of random subset pairs")->check(CLI::PositiveNumber);
  spike->add_option("--out", out_path, "JSON report (default: stdout)");

  // attribute
  std::string predictor = "bucket-mean";
  std::size_t limit = 500;
  auto* attribute = app.add_subcommand("attribute", "Exact Shapley attribution per feature");
  attribute->add_option("--data", data_path, "Encoded dataset to explain")->required();
  attribute->add_option("--predictor", predictor, "Predictor")->check(CLI::IsMember({"bucket-mean"}));
  attribute->add_option("--candidate", candidate_path, "Encoded labeled dataset backing the predictor")->required();
  attribute->add_option("--limit", limit, "Maximum samples evaluated");
  attribute->add_option("--seed", seed, "RNG seed");
  attribute->add_option("--out", out_path, "JSON report")->required();

  // gen
  fs::path model_path, out_full, out_missing;
  std::size_t n_households = 0;
  std::optional<double> spike_factor, missingness;
  std::string gen_survey = "SYN";
  int gen_year = 2017;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic survey with planted deliveries");
  gen->add_option("--model", model_path, "Population model JSON (default: built-in model)");
  gen->add_option("--households", n_households, "Number of households")->required();
  gen->add_option("--seed", seed, "RNG seed");
  gen->add_option("--survey-id", gen_survey, "Survey id");
  gen->add_option("--year", gen_year, "Survey year");
  gen->add_option("--spike-factor", spike_factor, "Override the model's propensity scale");
  gen->add_option("--missingness", missingness, "Override the model's missingness rate");
  gen->add_option("--out-full", out_full, "Encoded dataset with every y")->required();
  gen->add_option("--out-missing", out_missing, "Encoded dataset with y withheld")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const auto started = std::chrono::steady_clock::now();
  CLI::App* sub = app.get_subcommands().front();
  run.command = sub->get_name();

  try {
    if (sub == ingest) {
      const auto spec = nnfuse::load_spec(spec_path);
      run.input(spec_path);
      run.input(tables.households);
      run.input(tables.persons);
      run.input(tables.days);
      const auto raw = nnfuse::load_tables(tables, survey_id, spec.keys(survey_id));
      const auto ds = nnfuse::assemble(raw, spec, year);
      run.report = nnfuse::describe(ds).to_json();
      run.report["rows"] = {{"households", raw.households.rows.size()},
                            {"persons", raw.persons.rows.size()},
                            {"days", raw.days.rows.size()}};
      run.report["dictionary_hash"] = ds.dictionary.hash();
      run.output(out_path, nnfuse::serialize_dataset(ds), true);
    } else if (sub == describe) {
      const auto ds = load(run, data_path);
      const json summary = nnfuse::describe(ds).to_json();
      run.report = summary;
      if (!out_path.empty()) {
        run.output(out_path, dump(summary), true);
      } else {
        std::cout << dump(summary);
      }
      if (!totals_out.empty()) {
        run.output(totals_out, nnfuse::serialize_totals(nnfuse::labeled_household_totals(ds)),
                   out_path.empty());
      }
    } else if (sub == impute) {
      const auto source = load(run, source_path);
      nnfuse::ImputationResult result;
      if (method == "mean") {
        result = nnfuse::baseline_mean_impute(source);
        run.report["method"] = "mean";
      } else {
        if (candidate_path.empty()) throw CLI::RequiredError("--candidate");
        const auto candidate_raw = load(run, candidate_path);
        nnfuse::require_same_dictionary(source, candidate_raw);
        // Ground truth = labeled candidate samples + labeled source samples.
        const auto candidate = nnfuse::concat(nnfuse::labeled_subset(candidate_raw),
                                              nnfuse::labeled_subset(source));
        nnfuse::ImputeOptions opts;
        opts.impute_all = impute_all;
        opts.weight = per_household ? nnfuse::WeightMode::kPerHousehold : nnfuse::WeightMode::kGlobal;
        opts.match.threads = run.threads;
        opts.match.use_index = use_index;
        if (tie_break == "random") {
          opts.match.tie_break = nnfuse::TieBreak::kRandom;
          opts.match.seed = require_seed(seed, "--tie-break random");
          run.seed = seed;
        }
        result = nnfuse::impute(source, candidate, opts);
        double mean_distance = 0.0;
        for (std::size_t i = 0; i < result.assignment.size(); ++i) mean_distance += result.assignment.distance(i);
        run.report["method"] = "nn";
        run.report["w"] = result.weight;
        run.report["candidate_samples"] = candidate.size();
        run.report["candidate_dropped_unlabeled"] = candidate_raw.size() - nnfuse::labeled_subset(candidate_raw).size();
        run.report["buckets"] = result.buckets.size();
        run.report["mean_distance"] = mean_distance / static_cast<double>(result.assignment.size());
        run.report["dictionary_hash"] = source.dictionary.hash();
        run.output(out_path, nnfuse::serialize_assignment(source, result), true);
      }
      std::size_t n_imputed = 0;
      for (bool b : result.imputed) n_imputed += b;
      run.report["source_samples"] = source.size();
      run.report["imputed_samples"] = n_imputed;
      run.report["households"] = result.per_household_y.size();
      run.report["household_aggregation"] = "sum over all person-day samples";
      if (method == "mean") {
        std::string body = "household_id,sample_index,matched_bucket,distance,y_imputed\n";
        for (std::size_t i = 0; i < source.size(); ++i) {
          body += nnfuse::csv_escape(source.samples[i].household_id) + "," + std::to_string(i) +
                  ",,," + nnfuse::format_double(result.per_sample_y[i]) + "\n";
        }
        run.output(out_path, std::move(body), true);
      }
      run.output(households_out.empty() ? sibling(out_path, "_households.csv") : households_out,
                 nnfuse::serialize_totals(result.per_household_y));
      if (!encoded_out.empty()) {
        run.output(encoded_out, nnfuse::serialize_dataset(nnfuse::apply_imputation(source, result)));
      }
    } else if (sub == synth) {
      const auto source2 = load(run, source2_path);
      const auto source1 = load(run, source1_path);
      const auto candidate_raw = load(run, candidate_path);
      nnfuse::require_same_dictionary(source2, source1);
      nnfuse::require_same_dictionary(source1, candidate_raw);
      const auto candidate = nnfuse::labeled_subset(candidate_raw);
      nnfuse::MatchOptions opts;
      opts.threads = run.threads;
      opts.use_index = use_index;
      const auto graph = nnfuse::nested_match(source2, source1, candidate, opts);
      const auto weights = nnfuse::default_weights(graph);
      auto normalization = nnfuse::Normalization::kReachedSources;
      if (norm == "matched") normalization = nnfuse::Normalization::kMatchedSources;
      if (norm == "all" || literal_norm) normalization = nnfuse::Normalization::kAllSources;
      const auto synthetic = nnfuse::synthesize(graph, weights, normalization);
      const auto out_ds = nnfuse::to_dataset(synthetic, graph, candidate, out_year.value_or(source2.year));
      std::set<std::string> cand_households, synth_households;
      for (const auto& s : candidate.samples) cand_households.insert(s.household_id);
      for (const auto& s : out_ds.samples) synth_households.insert(s.household_id);
      run.report = {{"w1", weights.w1},
                    {"w2", weights.w2},
                    {"normalization", normalization == nnfuse::Normalization::kAllSources
                                          ? "all"
                                          : (normalization == nnfuse::Normalization::kMatchedSources ? "matched" : "reached")},
                    {"buckets", graph.buckets().size()},
                    {"buckets_synthesized", synthetic.entries.size()},
                    {"source2_dropped_missing_y", graph.source2_dropped},
                    {"candidate_dropped_unlabeled", candidate_raw.size() - candidate.size()},
                    {"candidate_households", cand_households.size()},
                    {"households_synthesized", synth_households.size()},
                    {"samples_synthesized", out_ds.size()}};
      run.output(out_path, nnfuse::serialize_dataset(out_ds), true);
      run.output(provenance_out.empty() ? sibling(out_path, "_provenance.csv") : provenance_out,
                 nnfuse::serialize_provenance(synthetic));
    } else if (sub == evaluate) {
      const std::uint64_t s = require_seed(seed, "evaluate");
      run.seed = s;
      run.input(imputed_path);
      run.input(truth_path);
      const auto imputed = nnfuse::load_totals(imputed_path);
      const auto truth = nnfuse::load_totals(truth_path);
      const std::size_t n = subset_n.value_or(truth.size());
      const auto cutoffs = parse_cutoffs(cutoffs_text);
      const auto report = nnfuse::subsample_compare(imputed, truth, n, cutoffs, s, run.threads);
      json j = report.to_json();
      if (!baseline_path.empty()) {
        run.input(baseline_path);
        const auto baseline = nnfuse::load_totals(baseline_path);
        j["baseline"] = nnfuse::subsample_compare(baseline, truth, n, cutoffs, s, run.threads).to_json();
      }
      run.report = {{"n", n}, {"iterations", cutoffs.empty() ? 0 : *std::max_element(cutoffs.begin(), cutoffs.end())}};
      run.output(out_path, dump(j), true);
      if (!sorted_out.empty()) {
        const auto first = nnfuse::draw_households(nnfuse::totals_vector(imputed), n, s, 0);
        run.output(sorted_out, nnfuse::serialize_sorted(first, nnfuse::totals_vector(truth)));
      }
    } else if (sub == spike) {
      const std::uint64_t s = require_seed(seed, "spike");
      run.seed = s;
      run.input(a_path);
      run.input(b_path);
      const auto report = nnfuse::spike(nnfuse::load_totals(a_path), nnfuse::load_totals(b_path),
                                        *subset_n, s, repeats);
      run.report = report.to_json();
      if (!out_path.empty()) {
        run.output(out_path, dump(report.to_json()), true);
      } else {
        for (double m : report.mse) std::cout << nnfuse::format_double(m) << "\n";
      }
    } else if (sub == attribute) {
      const std::uint64_t s = require_seed(seed, "attribute");
      run.seed = s;
      const auto ds = load(run, data_path);
      const auto candidate_raw = load(run, candidate_path);
      nnfuse::require_same_dictionary(ds, candidate_raw);
      const nnfuse::BucketMeanPredictor model(ds.dictionary,
                                              nnfuse::build_buckets(nnfuse::labeled_subset(candidate_raw)));
      const auto report = nnfuse::attribute_dataset(ds, model, limit, s, run.threads);
      json j = report.to_json();
      j["predictor"] = predictor;
      j["note"] = "attribution directions depend on the predictor";
      run.report = {{"samples_evaluated", report.evaluated.size()},
                    {"max_efficiency_residual", report.max_efficiency_residual}};
      run.output(out_path, dump(j), true);
    } else if (sub == gen) {
      const std::uint64_t s = require_seed(seed, "gen");
      run.seed = s;
      nnfuse::PopulationModel model = nnfuse::default_population_model();
      if (!model_path.empty()) {
        run.input(model_path);
        model = nnfuse::load_model(model_path);
      }
      if (spike_factor) model.spike_factor = *spike_factor;
      if (missingness) model.missingness = *missingness;
      const auto survey = nnfuse::generate(model, n_households, gen_survey, gen_year, s);
      run.report = nnfuse::describe(survey.with_missing).to_json();
      run.report["model"] = nnfuse::model_to_json(model);
      run.output(out_full, nnfuse::serialize_dataset(survey.full));
      run.output(out_missing, nnfuse::serialize_dataset(survey.with_missing), true);
    }

    json manifest;
    manifest["tool"] = "nnfuse";
    manifest["version"] = nnfuse::kVersion;
    manifest["subcommand"] = run.command;
    manifest["parameters"] = option_values(sub);
    manifest["parameters"]["threads"] = run.threads;
    manifest["inputs"] = json::array();
    for (const auto& p : run.inputs) {
      manifest["inputs"].push_back({{"path", p.string()}, {"sha256", sha256_file(p)}});
    }
    manifest["seed"] = run.seed ? json(*run.seed) : json(nullptr);
    manifest["report"] = run.report;
    manifest["duration_ms"] = std::chrono::duration<double, std::milli>(
                                  std::chrono::steady_clock::now() - started)
                                  .count();
    if (run.manifest.empty()) {
      std::cerr << manifest.dump() << "\n";
    } else {
      run.output(run.manifest, dump(manifest));
    }
    run.outputs.commit();
  } catch (const CLI::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const nnfuse::Error& e) {
    std::cerr << "error (" << nnfuse::to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
