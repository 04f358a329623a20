// Command-line driver: synthetic data generation, training, evaluation,
// ablation grids, pseudo-band visualization, gradient checking, and
// spectral-index rasters.
//
// Exit codes: 0 success, 1 user error (bad flags/inputs), 2 internal error.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "inamp/harness.hpp"
#include "inamp/pgm.hpp"

namespace {

using inamp::Tensor;

template <typename T>
Tensor<T> random_tensor(inamp::Shape shape, std::mt19937& rng, T lo = T(-1), T hi = T(1)) {
  std::uniform_real_distribution<T> d(lo, hi);
  std::vector<T> v(inamp::shape_size(shape));
  for (T& x : v) x = d(rng);
  return Tensor<T>::from_values(std::move(shape), std::move(v));
}

// --- flag bundles -----------------------------------------------------------

struct DataFlags {
  std::string manifest;
  std::uint64_t seed = 0;
  std::vector<std::size_t> bands;  // empty = keep all
};

struct ModelFlags {
  bool with_inamp = true;
  std::vector<std::size_t> widths{32, 64, 128};
  std::size_t inamp_out_channels = 32;
  std::size_t inamp_layers = 2;
  bool spatial_attention = true;
  bool channel_attention = true;
  std::size_t sa_kernel = 7;
  std::size_t ca_reduction = 8;
};

struct TrainFlags {
  std::size_t batch_size = 32;
  std::size_t epochs = 300;
  double lr = 0.01;
  std::size_t plateau_patience = 20;
  double plateau_factor = 0.8;
  std::size_t early_stop_patience = 60;
  bool augment = true;
};

void add_data_flags(CLI::App* cmd, DataFlags& f) {
  cmd->add_option("--data", f.manifest, "dataset manifest CSV")->required();
  cmd->add_option("--seed", f.seed, "seed for splits, init, shuffling");
  cmd->add_option("--bands", f.bands, "comma-separated band indices to keep")->delimiter(',');
}

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_flag("--with-inamp,!--no-inamp", f.with_inamp, "enable the amplification front-end");
  cmd->add_option("--widths", f.widths, "backbone conv widths")->delimiter(',');
  cmd->add_option("--inamp-out-channels", f.inamp_out_channels, "amplified channel count");
  cmd->add_option("--inamp-layers", f.inamp_layers, "stacked 1x1 conv layers (1-4)");
  cmd->add_flag("--spatial-attention,!--no-spatial-attention", f.spatial_attention,
                "apply the spatial mask");
  cmd->add_flag("--channel-attention,!--no-channel-attention", f.channel_attention,
                "apply per-channel gates");
  cmd->add_option("--sa-kernel", f.sa_kernel, "spatial-attention conv size");
  cmd->add_option("--ca-reduction", f.ca_reduction, "channel-attention MLP reduction");
}

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--batch-size", f.batch_size, "samples per optimizer step");
  cmd->add_option("--epochs", f.epochs, "maximum training epochs");
  cmd->add_option("--lr", f.lr, "initial learning rate");
  cmd->add_option("--plateau-patience", f.plateau_patience, "epochs without val-loss improvement before decay");
  cmd->add_option("--plateau-factor", f.plateau_factor, "learning-rate decay factor");
  cmd->add_option("--early-stop-patience", f.early_stop_patience,
                  "epochs without val-accuracy improvement before stopping");
  cmd->add_flag("--augment,!--no-augment", f.augment, "random flips during training");
}

// --- shared plumbing --------------------------------------------------------

struct LoadedSplits {
  inamp::Dataset train, val, test;
  inamp::DatasetManifest manifest;
};

LoadedSplits load_splits(const DataFlags& f) {
  LoadedSplits out;
  out.manifest = inamp::read_manifest(f.manifest);
  auto split = inamp::split_dataset(out.manifest, f.seed);
  const std::vector<std::size_t>* bands = f.bands.empty() ? nullptr : &f.bands;
  out.train = inamp::load_dataset(split.train, bands);
  out.val = inamp::load_dataset(split.val, bands);
  out.test = inamp::load_dataset(split.test, bands);
  return out;
}

inamp::ClassifierConfig make_model_config(const ModelFlags& f, const inamp::Dataset& sample,
                                          std::size_t n_classes) {
  if (sample.images.empty()) throw inamp::EmptySplit("no images to size the model from");
  const auto& img = sample.images[0];
  if (img.width != img.height)
    throw inamp::ConfigError("model expects square inputs, got " + std::to_string(img.width) + "x" +
                             std::to_string(img.height));
  inamp::ClassifierConfig cfg;
  cfg.with_inamp = f.with_inamp;
  cfg.input_bands = img.channels();
  cfg.input_size = img.width;
  cfg.n_classes = n_classes;
  cfg.block_widths = f.widths;
  cfg.inamp.in_bands = img.channels();
  cfg.inamp.out_channels = f.inamp_out_channels;
  cfg.inamp.n_one_by_one_layers = f.inamp_layers;
  cfg.inamp.use_spatial_attention = f.spatial_attention;
  cfg.inamp.use_channel_attention = f.channel_attention;
  cfg.inamp.sa_kernel = f.sa_kernel;
  cfg.inamp.ca_reduction = f.ca_reduction;
  cfg.validate();
  return cfg;
}

inamp::TrainConfig make_train_config(const TrainFlags& f, std::uint64_t seed) {
  inamp::TrainConfig cfg;
  cfg.batch_size = f.batch_size;
  cfg.max_epochs = f.epochs;
  cfg.initial_lr = f.lr;
  cfg.plateau_patience = f.plateau_patience;
  cfg.plateau_factor = f.plateau_factor;
  cfg.early_stop_patience = f.early_stop_patience;
  cfg.seed = seed;
  cfg.augment = f.augment;
  cfg.validate();
  return cfg;
}

std::size_t resolve_target(const std::vector<std::string>& label_names, long long flag) {
  if (flag >= 0) {
    if (static_cast<std::size_t>(flag) >= label_names.size())
      throw inamp::LabelOutOfRange("--target-label " + std::to_string(flag) + " outside taxonomy");
    return static_cast<std::size_t>(flag);
  }
  for (std::size_t i = 0; i < label_names.size(); ++i) {
    if (label_names[i] == "smoke") return i;
  }
  return label_names.size() - 1;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw inamp::IoError("cannot create " + dir + ": " + ec.message());
}

// --- gradient checking ------------------------------------------------------

struct GradGroup {
  std::string name;
  double max_rel_error;
};

double check_conv() {
  std::mt19937 rng(79);
  double worst = 0;
  {
    auto x = random_tensor<double>({1, 4, 4, 2}, rng).set_requires_grad(true);
    auto w = random_tensor<double>({3, 3, 2, 3}, rng).set_requires_grad(true);
    auto b = random_tensor<double>({3}, rng).set_requires_grad(true);
    auto f = [&] { return inamp::mean_all(inamp::conv2d(x, inamp::ConvKernel<double>{w, b})); };
    worst = std::max(worst, inamp::grad_check<double>(f, {x, w, b}, 1e-6).max_rel_error);
  }
  {
    auto x = random_tensor<double>({2, 5, 5, 2}, rng).set_requires_grad(true);
    auto w = random_tensor<double>({3, 3, 2, 2}, rng).set_requires_grad(true);
    auto b = random_tensor<double>({2}, rng).set_requires_grad(true);
    auto f = [&] {
      auto y = inamp::conv2d(x, inamp::ConvKernel<double>{w, b}, 2, inamp::Padding::Valid);
      return inamp::mean_all(inamp::mul(y, y));
    };
    worst = std::max(worst, inamp::grad_check<double>(f, {x, w, b}, 1e-6).max_rel_error);
  }
  return worst;
}

double check_dense_pool() {
  std::mt19937 rng(83);
  double worst = 0;
  {
    auto x = random_tensor<double>({3, 4}, rng).set_requires_grad(true);
    auto w = random_tensor<double>({4, 3}, rng).set_requires_grad(true);
    auto b = random_tensor<double>({3}, rng).set_requires_grad(true);
    auto f = [&] {
      auto h = inamp::sigmoid(inamp::dense(x, w, b));
      return inamp::mean_all(inamp::mul(h, h));
    };
    worst = std::max(worst, inamp::grad_check<double>(f, {x, w, b}, 1e-6).max_rel_error);
  }
  {
    auto x = random_tensor<double>({2, 4, 4, 3}, rng).set_requires_grad(true);
    auto f = [&] {
      auto m = inamp::max_pool_2x2(x);
      auto a = inamp::global_avg_pool(m);
      auto g = inamp::global_max_pool(m);
      return inamp::mean_all(inamp::mul(a, g));
    };
    worst = std::max(worst, inamp::grad_check<double>(f, {x}, 1e-6).max_rel_error);
  }
  return worst;
}

double check_inamp() {
  inamp::InAmpConfig cfg;
  cfg.in_bands = 3;
  cfg.out_channels = 8;
  cfg.sa_kernel = 3;
  cfg.ca_reduction = 4;
  inamp::RngStream stream(53, "init");
  auto params = inamp::make_inamp_params<double>(cfg, stream);
  std::mt19937 rng(59);
  auto x = random_tensor<double>({1, 4, 4, 3}, rng).set_requires_grad(true);
  auto leaves = inamp::inamp_param_list(params);
  leaves.push_back(x);
  auto f = [&] {
    auto y = inamp::inamp_forward(x, params, cfg);
    return inamp::mean_all(inamp::mul(y, y));
  };
  return inamp::grad_check<double>(f, leaves, 1e-6).max_rel_error;
}

double check_loss() {
  std::mt19937 rng(67);
  auto logits = random_tensor<double>({3, 4}, rng, -2.0, 2.0).set_requires_grad(true);
  const std::vector<std::size_t> labels{1, 3, 0};
  auto f = [&] { return inamp::softmax_xent(logits, labels).loss; };
  return inamp::grad_check<double>(f, {logits}, 1e-6).max_rel_error;
}

int run_gradcheck(const std::string& module) {
  std::vector<GradGroup> groups;
  if (module == "all" || module == "conv") groups.push_back({"conv", check_conv()});
  if (module == "all") groups.push_back({"dense_pool", check_dense_pool()});
  if (module == "all" || module == "inamp") groups.push_back({"inamp", check_inamp()});
  if (module == "all" || module == "loss") groups.push_back({"loss", check_loss()});
  if (groups.empty()) throw inamp::ConfigError("unknown gradcheck module: " + module);

  double worst = 0;
  for (const auto& g : groups) {
    std::cout << g.name << " max_rel_error=" << g.max_rel_error << "\n";
    worst = std::max(worst, g.max_rel_error);
  }
  std::cout << "overall max_rel_error=" << worst << (worst < 1e-4 ? " pass" : " FAIL") << "\n";
  return worst < 1e-4 ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"input-amplified multi-spectral scene classification"};
  app.require_subcommand(1);
  int rc = 0;

  // gen-data ------------------------------------------------------------
  auto* gen = app.add_subcommand("gen-data", "generate the synthetic multi-spectral benchmark");
  inamp::SyntheticSpec spec;
  std::string gen_out;
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--per-label", spec.images_per_label, "images per label");
  gen->add_option("--size", spec.size, "square image side in pixels");
  gen->add_option("--noise", spec.noise_sigma, "plume noise sigma");
  gen->add_option("--min-plumes", spec.min_plumes, "minimum plumes per aerosol scene");
  gen->add_option("--max-plumes", spec.max_plumes, "maximum plumes per aerosol scene");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->callback([&] {
    auto manifest = inamp::gen_synthetic(spec, gen_out);
    inamp::write_manifest(manifest, gen_out + "/manifest.csv");
    std::cout << "wrote " << manifest.records.size() << " images and " << gen_out
              << "/manifest.csv\n";
  });

  // train ----------------------------------------------------------------
  auto* tr = app.add_subcommand("train", "train a classifier on a manifest");
  DataFlags tr_data;
  ModelFlags tr_model;
  TrainFlags tr_train;
  std::string tr_out;
  long long tr_target = -1;
  add_data_flags(tr, tr_data);
  add_model_flags(tr, tr_model);
  add_train_flags(tr, tr_train);
  tr->add_option("--out", tr_out, "output directory")->required();
  tr->add_option("--target-label", tr_target, "label index for the miss-rate metric (default: smoke)");
  tr->callback([&] {
    ensure_dir(tr_out);
    auto splits = load_splits(tr_data);
    auto cfg = make_model_config(tr_model, splits.train, splits.manifest.n_labels());
    auto tcfg = make_train_config(tr_train, tr_data.seed);
    const std::size_t target = resolve_target(splits.manifest.label_names, tr_target);

    inamp::RngStream init(tr_data.seed, "init");
    auto model = inamp::build_classifier<float>(cfg, init);
    auto report = inamp::train(model, splits.train, splits.val, splits.test, tcfg, target);

    inamp::save_classifier(model, tr_out + "/checkpoint.iawt");
    inamp::write_train_report(report, tr_out + "/report.txt");
    inamp::write_epoch_csv(report, tr_out + "/epochs.csv");
    std::cout << "epochs=" << report.epochs.size() << " stop=" << report.stop_reason
              << " best_epoch=" << report.best_epoch << "\n";
    std::cout << "test_accuracy=" << inamp::fixed6(report.test_accuracy)
              << " test_kappa=" << inamp::fixed6(report.test_kappa)
              << " test_fn_rate=" << inamp::fixed6(report.test_fn_rate) << "\n";
    std::cout << "wrote " << tr_out << "/checkpoint.iawt, report.txt, epochs.csv\n";
  });

  // eval -----------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  DataFlags ev_data;
  std::string ev_checkpoint, ev_split = "test";
  long long ev_target = -1;
  std::size_t ev_batch = 32;
  add_data_flags(ev, ev_data);
  ev->add_option("--checkpoint", ev_checkpoint, "trained model file")->required();
  ev->add_option("--split", ev_split, "train, val, or test")
      ->check(CLI::IsMember({"train", "val", "test"}));
  ev->add_option("--target-label", ev_target, "label index for the miss-rate metric (default: smoke)");
  ev->add_option("--batch-size", ev_batch, "evaluation batch size");
  ev->callback([&] {
    auto splits = load_splits(ev_data);
    auto& ds = ev_split == "train" ? splits.train : ev_split == "val" ? splits.val : splits.test;
    auto model = inamp::load_classifier<float>(ev_checkpoint);
    const std::size_t target = resolve_target(splits.manifest.label_names, ev_target);
    auto rep = inamp::evaluate(model, ds, target, ev_batch);
    std::cout << "split=" << ev_split << "\n";
    inamp::write_metrics_report(rep, std::cout);
  });

  // ablate ---------------------------------------------------------------
  auto* ab = app.add_subcommand("ablate", "train every variant along one ablation axis");
  DataFlags ab_data;
  ModelFlags ab_model;
  TrainFlags ab_train;
  std::string ab_axis, ab_out;
  long long ab_target = -1;
  add_data_flags(ab, ab_data);
  add_model_flags(ab, ab_model);
  add_train_flags(ab, ab_train);
  ab->add_option("--axis", ab_axis, "attention, layers, or channels")
      ->required()
      ->check(CLI::IsMember({"attention", "layers", "channels"}));
  ab->add_option("--out", ab_out, "output directory")->required();
  ab->add_option("--target-label", ab_target, "label index for the miss-rate metric (default: smoke)");
  ab->callback([&] {
    ensure_dir(ab_out);
    auto splits = load_splits(ab_data);
    auto cfg = make_model_config(ab_model, splits.train, splits.manifest.n_labels());
    auto tcfg = make_train_config(ab_train, ab_data.seed);
    const std::size_t target = resolve_target(splits.manifest.label_names, ab_target);

    auto table = inamp::ablate<float>(inamp::ablation_axis_from_name(ab_axis), cfg, tcfg,
                                      splits.train, splits.val, splits.test, target);
    const std::string csv = ab_out + "/ablation_" + ab_axis + ".csv";
    inamp::write_ablation_csv(table, csv);
    std::cout << "variant,accuracy,kappa,fn_rate\n";
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      const auto& r = table.rows[i];
      std::cout << r.variant << "," << inamp::fixed6(r.accuracy) << "," << inamp::fixed6(r.kappa)
                << "," << inamp::fixed6(r.fn_rate) << (i == table.best_row ? " *" : "") << "\n";
    }
    std::cout << "wrote " << csv << "\n";
  });

  // viz --------------------------------------------------------------------
  auto* vz = app.add_subcommand("viz", "export amplified channels of one image as graymaps");
  std::string vz_checkpoint, vz_image, vz_out;
  std::vector<std::size_t> vz_bands;
  vz->add_option("--checkpoint", vz_checkpoint, "trained model file")->required();
  vz->add_option("--image", vz_image, "band-stack raster to amplify")->required();
  vz->add_option("--bands", vz_bands, "amplified channel indices to export")
      ->required()
      ->delimiter(',');
  vz->add_option("--out", vz_out, "output directory")->required();
  vz->callback([&] {
    ensure_dir(vz_out);
    auto model = inamp::load_classifier<float>(vz_checkpoint);
    if (!model.amplified())
      throw inamp::ConfigError("viz: checkpoint was trained without the amplification front-end");
    auto img = inamp::read_msib(vz_image);
    auto batch = inamp::stack_images<float>({&img});
    if (batch.dim(3) != model.cfg.input_bands)
      throw inamp::ChannelMismatch("viz: image has " + std::to_string(batch.dim(3)) +
                                   " bands, model expects " + std::to_string(model.cfg.input_bands));
    auto amplified = inamp::inamp_forward(batch, model.amp, model.cfg.inamp);
    auto paths = inamp::export_pseudo_bands(amplified, vz_bands, vz_out + "/");
    for (const auto& p : paths) std::cout << "wrote " << p << "\n";
  });

  // gradcheck ---------------------------------------------------------------
  auto* gc = app.add_subcommand("gradcheck", "finite-difference checks of the layer gradients");
  std::string gc_module = "all";
  gc->add_option("--module", gc_module, "all, conv, inamp, or loss")
      ->check(CLI::IsMember({"all", "conv", "inamp", "loss"}));
  gc->callback([&] { rc = run_gradcheck(gc_module); });

  // index ---------------------------------------------------------------
  auto* ix = app.add_subcommand("index", "write a spectral-index graymap for one image");
  std::string ix_image, ix_kind = "ndvi", ix_out;
  inamp::BandMap ix_bands;
  ix->add_option("--image", ix_image, "band-stack raster")->required();
  ix->add_option("--kind", ix_kind, "ndvi, nbr, or ndbi")
      ->check(CLI::IsMember({"ndvi", "nbr", "ndbi"}));
  ix->add_option("--out", ix_out, "output graymap path")->required();
  ix->add_option("--red-band", ix_bands.red, "band name for the red role");
  ix->add_option("--nir-band", ix_bands.nir, "band name for the nir role");
  ix->add_option("--swir-band", ix_bands.swir, "band name for the swir role");
  ix->callback([&] {
    auto img = inamp::read_msib(ix_image);
    auto map = inamp::spectral_index(img, inamp::index_kind_from_name(ix_kind), ix_bands);
    inamp::write_pgm(ix_out, img.width, img.height, inamp::normalize_to_gray(map));
    std::cout << "wrote " << ix_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help to stdout, exits 0
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  } catch (const inamp::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return rc;
}
