// trance: command-line front end for concept discovery, explanation and
// faithfulness evaluation on activation archives.
//
// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.

#include <cstdint>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "trance/trance.hpp"

namespace {

using trance::ErrorCategory;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;

/// Flat JSON object of long option names for the selected subcommand; flags on
/// the command line win.
class JsonConfig : public CLI::Config {
 public:
  explicit JsonConfig(const CLI::App* root) : root_(root) {}

  std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
    nlohmann::json j = nlohmann::json::object();
    for (const CLI::Option* opt : app->get_options({})) {
      if (opt->get_lnames().empty() || !opt->get_configurable()) continue;
      const auto& name = opt->get_lnames().front();
      if (opt->count() > 0)
        j[name] = opt->reduced_results().size() == 1 ? nlohmann::json(opt->reduced_results().front())
                                                    : nlohmann::json(opt->reduced_results());
      else if (default_also && !opt->get_default_str().empty())
        j[name] = opt->get_default_str();
    }
    return j.dump(2) + "\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError("config", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw CLI::ConversionError("config", "top level must be an object");
    const auto selected = root_->get_subcommands();
    std::vector<CLI::ConfigItem> items;
    for (const auto& [key, value] : j.items()) {
      CLI::ConfigItem item;
      if (!selected.empty()) item.parents = {selected.front()->get_name()};
      item.name = key;
      if (value.is_array())
        for (const auto& v : value) item.inputs.push_back(scalar(v));
      else
        item.inputs.push_back(scalar(value));
      items.push_back(std::move(item));
    }
    return items;
  }

 private:
  static std::string scalar(const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number() || v.is_null()) return v.dump();
    throw CLI::ConversionError("config", "nested values are not supported");
  }

  const CLI::App* root_;
};

int exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Usage: return kExitUsage;
    case ErrorCategory::Data: return kExitData;
    case ErrorCategory::Numerical: return kExitNumerical;
  }
  return kExitData;
}

struct Common {
  std::string archive;
  std::int64_t target_class = 0;
  std::size_t concepts = 32;
  std::string reducer = "vae";
  std::uint64_t seed = 0;
  std::string checkpoint;
  std::string cache;
  std::size_t segment = 16;
  trance::ReducerConfig reducer_cfg{};
};

CLI::App* add_subcommand(CLI::App& app, const std::string& name, const std::string& help) {
  auto* sub = app.add_subcommand(name, help);
  sub->footer("Option values may also come from a flat JSON file: --config FILE.");
  return sub;
}

void add_archive(CLI::App* sub, Common& c, bool with_class = true) {
  sub->add_option("--archive", c.archive, "Activation archive (TAF); may contain {layer}")->required();
  if (with_class) sub->add_option("--class", c.target_class, "Target class id");
}

void add_reducer(CLI::App* sub, Common& c, bool with_kind = true, bool with_concepts = true) {
  if (with_concepts) sub->add_option("--concepts", c.concepts, "Number of concepts c'")->check(CLI::PositiveNumber);
  if (with_kind)
    sub->add_option("--reducer", c.reducer, "Concept reducer")->check(CLI::IsMember({"vae", "nmf", "pca"}));
  sub->add_option("--seed", c.seed, "Random seed");
  auto& t = c.reducer_cfg.train;
  sub->add_option("--epochs", t.epochs_max, "Maximum training epochs")->check(CLI::PositiveNumber);
  sub->add_option("--lr", t.lr_initial, "Initial learning rate")->check(CLI::PositiveNumber);
  sub->add_option("--batch", t.batch_size, "Mini-batch size")->check(CLI::PositiveNumber);
  sub->add_option("--kl-weight", t.kl_weight, "Weight of the KL term")->check(CLI::NonNegativeNumber);
  sub->add_option("--val-fraction", t.val_fraction, "Share of rows held out for validation")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--patience", t.early_stop_patience, "Early-stopping patience in epochs");
  sub->add_option("--nmf-iters", c.reducer_cfg.nmf_iters, "NMF fitting iterations")->check(CLI::PositiveNumber);
  sub->add_option("--nmf-project-iters", c.reducer_cfg.nmf_project_iters, "NMF projection iterations")
      ->check(CLI::PositiveNumber);
}

void add_model_io(CLI::App* sub, Common& c) {
  sub->add_option("--checkpoint", c.checkpoint, "Load this VAE checkpoint instead of training");
  sub->add_option("--cache", c.cache, "Directory caching fitted VAEs between runs");
}

trance::PipelineConfig pipeline_config(const Common& c) {
  trance::PipelineConfig cfg;
  cfg.archive_path = c.archive;
  cfg.target_class = c.target_class;
  cfg.c_prime = c.concepts;
  cfg.reducer = trance::parse_reducer_kind(c.reducer);
  cfg.reducer_cfg = c.reducer_cfg;
  cfg.seed = c.seed;
  cfg.welch.segment_length = c.segment;
  if (!c.checkpoint.empty()) cfg.checkpoint = c.checkpoint;
  if (!c.cache.empty()) cfg.cache_dir = c.cache;
  return cfg;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-based explanations of CNN activations"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  // --config may follow the subcommand; unknown subcommand options fall through to it.
  app.fallthrough();
  app.set_config("--config", "", "JSON file of option values for the subcommand (command-line flags take precedence)");
  app.config_formatter(std::make_shared<JsonConfig>(&app));
  app.allow_config_extras(CLI::config_extras_mode::error);

  Common common;

  // train
  std::string train_out = "vae.tvm";
  auto* train = add_subcommand(app, "train", "Fit a VAE on one class and save the checkpoint");
  add_archive(train, common);
  add_reducer(train, common, false);
  train->add_option("--out", train_out, "Checkpoint path");

  // explain
  std::string explain_out = "out";
  std::string layer;
  std::size_t m_star = 5;
  double alpha = trance::kDefaultOverlayAlpha;
  int bessel_order = 0;
  double band = trance::kDefaultScaleBand;
  std::size_t size = 224;
  std::string mode = "similarity";
  auto* explain = add_subcommand(app, "explain", "Discover concepts and write report, heatmaps and faith");
  add_archive(explain, common);
  add_reducer(explain, common);
  add_model_io(explain, common);
  explain->add_option("--out", explain_out, "Output directory");
  explain->add_option("--layer", layer, "Layer substituted for {layer} in the archive path");
  explain->add_option("--m", m_star, "Prototypes per concept")->check(CLI::PositiveNumber);
  explain->add_option("--alpha", alpha, "Heatmap overlay opacity")->check(CLI::Range(0.0, 1.0));
  explain->add_option("--bessel-order", bessel_order, "Bessel order used to enhance heatmaps");
  explain->add_option("--band", band, "Heatmaps are scaled to [0, band] before enhancement")
      ->check(CLI::Range(1e-9, 50.0));
  explain->add_option("--size", size, "Rendered heatmap edge in pixels")->check(CLI::PositiveNumber);
  explain->add_option("--contribution", mode, "Contribution rule")->check(CLI::IsMember({"similarity", "weight"}));
  explain->add_option("--segment", common.segment, "Welch segment length");

  // prototypes
  auto* protos = add_subcommand(app, "prototypes", "Print the prototypes selected for every concept");
  add_archive(protos, common);
  add_reducer(protos, common);
  add_model_io(protos, common);
  protos->add_option("--m", m_star, "Prototypes per concept")->check(CLI::PositiveNumber);

  // evaluate
  auto* evaluate = add_subcommand(app, "evaluate", "Fidelity, coherence and faith of one reducer");
  add_archive(evaluate, common);
  add_reducer(evaluate, common);
  add_model_io(evaluate, common);
  evaluate->add_option("--segment", common.segment, "Welch segment length");

  // compare
  std::string reducers = "vae,nmf,pca";
  std::size_t n_seeds = 10;
  auto* compare = add_subcommand(app, "compare", "Faith of several reducers over seeds 0..N-1");
  add_archive(compare, common);
  add_reducer(compare, common, false);
  compare->add_option("--reducers", reducers, "Comma-separated reducers");
  compare->add_option("--seeds", n_seeds, "Number of seeds")->check(CLI::PositiveNumber);
  compare->add_option("--segment", common.segment, "Welch segment length");

  // sweep
  std::string layers = "";
  std::string concept_list = "8,16,24,32";
  std::string sweep_out = "out";
  auto* sweep = add_subcommand(app, "sweep", "Faith over a grid of layers and concept counts");
  add_archive(sweep, common);
  add_reducer(sweep, common, true, false);
  sweep->add_option("--layers", layers, "Comma-separated layer names")->required();
  sweep->add_option("--concepts", concept_list, "Comma-separated concept counts");
  sweep->add_option("--out", sweep_out, "Output directory for sweep.csv");
  sweep->add_option("--segment", common.segment, "Welch segment length");

  // synth
  trance::SyntheticSpec spec;
  std::string synth_out = "synthetic.taf";
  auto* synth = add_subcommand(app, "synth", "Write a synthetic activation archive");
  synth->add_option("--out", synth_out, "Archive path");
  synth->add_option("--classes", spec.num_classes, "Number of classes")->check(CLI::Range(2, 1000));
  synth->add_option("--images", spec.images_per_class, "Images per class")->check(CLI::PositiveNumber);
  synth->add_option("--height", spec.h, "Activation height")->check(CLI::PositiveNumber);
  synth->add_option("--width", spec.w, "Activation width")->check(CLI::PositiveNumber);
  synth->add_option("--channels", spec.c, "Channels")->check(CLI::Range(2, 1 << 16));
  synth->add_option("--rank", spec.rank, "Rank of the latent codes")->check(CLI::PositiveNumber);
  synth->add_option("--noise", spec.noise, "Standard deviation of additive noise")->check(CLI::NonNegativeNumber);
  synth->add_option("--mixing", spec.mixing_scale, "Standard deviation of the mixing matrix");
  synth->add_option("--sparsity", spec.sparsity, "Probability that a code entry is zero")->check(CLI::Range(0.0, 1.0));
  synth->add_option("--seed", spec.seed, "Random seed");
  synth->add_option("--model", spec.model_name, "Model name stored in the archive");
  synth->add_option("--layer", spec.layer_name, "Layer name stored in the archive");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*train) {
      const auto data = trance::load_class(pipeline_config(common));
      auto tc = common.reducer_cfg.train;
      tc.seed = common.seed;
      const auto fit = trance::vae_fit<float>(data.xn, common.concepts, tc);
      trance::save_checkpoint(fit.model, train_out);
      const auto& h = fit.history;
      nlohmann::json out{{"checkpoint", train_out},
                         {"stopped_epoch", h.stopped_epoch},
                         {"best_epoch", h.best_epoch},
                         {"train_loss", h.train_loss},
                         {"val_loss", h.val_loss},
                         {"learning_rate", h.learning_rate}};
      std::cout << out.dump(2) << "\n";
    } else if (*explain) {
      auto cfg = pipeline_config(common);
      cfg.layer = layer;
      cfg.out_dir = explain_out;
      cfg.m_star = m_star;
      cfg.alpha = alpha;
      cfg.bessel_order = bessel_order;
      cfg.scale_band = band;
      cfg.heatmap_size = size;
      cfg.contribution_mode = trance::parse_contribution_mode(mode);
      const auto report = trance::run_explain(cfg);
      std::cout << "wrote " << (cfg.out_dir / trance::class_directory(report.class_name, cfg.target_class)).string()
                << "  faith " << report.faith->faith << "  total contribution " << report.total_contribution << "\n";
    } else if (*protos) {
      auto cfg = pipeline_config(common);
      cfg.m_star = m_star;
      cfg.render = false;
      cfg.evaluate_faith = false;
      const auto report = trance::run_explain(cfg);
      nlohmann::json out = nlohmann::json::array();
      for (const auto& c : report.concepts)
        out.push_back({{"concept", c.index},
                       {"prototypes", c.prototypes},
                       {"prototype_ids", c.prototype_ids},
                       {"similarity", c.prototype_similarity}});
      std::cout << out.dump(2) << "\n";
    } else if (*evaluate) {
      const auto faith = trance::explain_faith(pipeline_config(common));
      auto j = trance::to_json(faith);
      j["class"] = common.target_class;
      j["reducer"] = common.reducer;
      std::cout << j.dump(2) << "\n";
    } else if (*compare) {
      std::vector<trance::ReducerKind> kinds;
      for (const auto& r : split(reducers)) kinds.push_back(trance::parse_reducer_kind(r));
      std::vector<std::uint64_t> seeds(n_seeds);
      for (std::size_t i = 0; i < n_seeds; ++i) seeds[i] = common.seed + i;
      trance::WelchConfig welch;
      welch.segment_length = common.segment;
      const auto archive = trance::read_archive(common.archive);
      const auto table = trance::compare_reducers(archive, common.target_class, common.concepts, seeds, kinds,
                                                  common.reducer_cfg, welch);
      std::cout.precision(6);
      std::cout << "class,reducer,seed,fidelity,coherence,faith\n";
      for (const auto& row : table) {
        for (std::size_t s = 0; s < row.seeds.size(); ++s)
          std::cout << common.target_class << ',' << trance::to_string(row.kind) << ',' << row.seeds[s] << ','
                    << row.per_seed[s].fidelity << ',' << row.per_seed[s].coherence << ',' << row.per_seed[s].faith
                    << '\n';
        std::cout << common.target_class << ',' << trance::to_string(row.kind) << ",mean," << row.fidelity << ','
                  << row.coherence << ',' << row.faith << '\n';
      }
    } else if (*sweep) {
      auto cfg = pipeline_config(common);
      cfg.out_dir = sweep_out;
      std::vector<std::size_t> cps;
      for (const auto& s : split(concept_list)) {
        try {
          cps.push_back(static_cast<std::size_t>(std::stoul(s)));
        } catch (const std::exception&) {
          trance::fail(trance::ErrorCode::InvalidArgument, "bad concept count '" + s + "'");
        }
      }
      const auto grid = trance::run_layer_sweep(cfg, split(layers), cps);
      std::cout << trance::sweep_csv(grid);
    } else if (*synth) {
      trance::write_archive(trance::make_synthetic_archive(spec), synth_out);
      std::cout << "wrote " << synth_out << "\n";
    }
  } catch (const trance::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code(trance::category_of(e.code()));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
