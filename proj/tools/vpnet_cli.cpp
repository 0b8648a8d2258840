// vpnet command-line driver: generate, train, evaluate, gridsearch, inspect, condsweep.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error,
// 3 numerical divergence.

#include "vpnet/vpnet.hpp"

#include <CLI11.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace vpnet;

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDiverged = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flag values are applied after the config file, and only when given.
class Overrides {
 public:
  template <typename T, typename Target>
  CLI::Option* add(CLI::App& app, const std::string& name, T& storage, Target& target, const std::string& help) {
    CLI::Option* opt = app.add_option(name, storage, help)->capture_default_str();
    apply_.push_back([opt, &storage, &target] {
      if (opt->count() > 0) target = storage;
    });
    return opt;
  }

  void apply() const {
    for (const auto& f : apply_) f();
  }

 private:
  std::vector<std::function<void()>> apply_;
};

ConfigFile load_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return ConfigFile::load(path);
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

template <typename F>
void with_config_errors(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

LabeledDataset load_data(const std::string& path, std::optional<std::size_t> heartbeat_window,
                         std::optional<std::size_t> class_count = std::nullopt) {
  if (heartbeat_window) return load_heartbeats(path, *heartbeat_window);
  return load_dataset(path, class_count);
}

void write_text(const std::string& path, const std::function<void(std::ostream&)>& body) {
  std::ofstream out(path);
  if (!out) throw DataError(path, 0, 0, "cannot open file for writing");
  body(out);
  out.flush();
  if (!out) throw DataError(path, 0, 0, "write failed");
}

/// "start:stop:count" -> count evenly spaced values (count 1 gives start).
std::vector<double> parse_range(const std::string& text, const std::string& flag) {
  const auto parts = vpnet::detail::split(text, ':');
  if (parts.size() == 1) {
    const auto v = vpnet::detail::parse_double(parts[0]);
    if (!v) throw UsageError(flag + ": expected a number or start:stop:count, got `" + text + "`");
    return {*v};
  }
  if (parts.size() != 3) throw UsageError(flag + ": expected start:stop:count, got `" + text + "`");
  const auto start = vpnet::detail::parse_double(parts[0]);
  const auto stop = vpnet::detail::parse_double(parts[1]);
  const auto count = vpnet::detail::parse_int<std::size_t>(parts[2]);
  if (!start || !stop || !count || *count == 0)
    throw UsageError(flag + ": expected start:stop:count with count >= 1, got `" + text + "`");
  std::vector<double> out(*count);
  for (std::size_t i = 0; i < *count; ++i)
    out[i] = *count == 1 ? *start
                         : *start + (*stop - *start) * static_cast<double>(i) / static_cast<double>(*count - 1);
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  for (auto field : vpnet::detail::split(text, ',')) {
    if constexpr (std::is_floating_point_v<T>) {
      const auto v = vpnet::detail::parse_double(field);
      if (!v) throw UsageError(flag + ": malformed list `" + text + "`");
      out.push_back(*v);
    } else {
      const auto v = vpnet::detail::parse_int<T>(field);
      if (!v) throw UsageError(flag + ": malformed list `" + text + "`");
      out.push_back(*v);
    }
  }
  return out;
}

// ---------------------------------------------------------------- generate

struct GenerateArgs {
  std::string config;
  std::string out = ".";
  std::size_t samples_per_class = 5000;
  std::size_t m = 100;
  std::size_t n_gen = 5;
  std::uint64_t seed = 1;
  Overrides overrides;
  SynthConfig synth;
};

void add_generate(CLI::App& app, GenerateArgs& a) {
  auto* cmd = app.add_subcommand("generate", "Generate the synthetic three-class shell dataset");
  cmd->add_option("--config", a.config, "Configuration file (key = value)");
  cmd->add_option("--out", a.out, "Output directory for train.csv, test.csv, train_meta.csv, test_meta.csv")
      ->capture_default_str();
  a.overrides.add(*cmd, "--samples-per-class", a.samples_per_class, a.synth.samples_per_class, "Samples per class");
  a.overrides.add(*cmd, "--m", a.m, a.synth.m, "Signal length");
  a.overrides.add(*cmd, "--n-gen", a.n_gen, a.synth.n_gen, "Generator order");
  a.overrides.add(*cmd, "--seed", a.seed, a.synth.seed, "Random seed");
}

int run_generate(GenerateArgs& a) {
  with_config_errors([&] { load_config(a.config).apply(a.synth); });
  a.overrides.apply();
  try {
    a.synth.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
  const SynthData data = generate(a.synth);
  std::filesystem::create_directories(a.out);
  const std::filesystem::path dir(a.out);
  save_dataset(data.train, (dir / "train.csv").string());
  save_dataset(data.test, (dir / "test.csv").string());
  write_text((dir / "train_meta.csv").string(), [&](std::ostream& os) { write_meta(os, data.train); });
  write_text((dir / "test_meta.csv").string(), [&](std::ostream& os) { write_meta(os, data.test); });
  for (const auto* split : {&data.train, &data.test}) {
    const auto hist = split->class_histogram();
    std::cout << (split == &data.train ? "train" : "test") << ": N=" << split->size()
              << " m=" << split->signal_length() << " classes=";
    for (std::size_t k = 0; k < hist.size(); ++k) std::cout << (k ? "/" : "") << hist[k];
    std::cout << '\n';
  }
  return 0;
}

// ---------------------------------------------------------------- network flags

struct NetworkArgs {
  std::string arch = "vpnet";
  std::size_t vp_dim = 7;
  std::size_t hidden = 8;
  std::size_t hidden2 = 0;
  std::size_t kernel = 5;
  std::size_t channels = 1;
  std::size_t pool = 4;
  std::string pool_mode = "max";
  std::string vp_init = "grid";
  std::string vp_mode = "feature";
  double vp_tau = 0.0;
  double vp_lambda = 1.0;
  ArchConfig resolved;
  std::string arch_text, pool_mode_text, vp_init_text, vp_mode_text;
};

void add_network_flags(CLI::App& cmd, NetworkArgs& n, Overrides& o) {
  n.arch_text = n.arch;
  n.pool_mode_text = n.pool_mode;
  n.vp_init_text = n.vp_init;
  n.vp_mode_text = n.vp_mode;
  o.add(cmd, "--arch", n.arch, n.arch_text, "Architecture: vpnet, fcnn or cnn");
  o.add(cmd, "--vp-dim", n.vp_dim, n.resolved.vp_dim, "VPNet: number of Hermite functions n");
  o.add(cmd, "--hidden", n.hidden, n.resolved.hidden, "Hidden FC width");
  o.add(cmd, "--hidden2", n.hidden2, n.resolved.hidden2, "FCNN: second hidden width (0 = none)");
  o.add(cmd, "--kernel", n.kernel, n.resolved.kernel, "CNN: kernel width");
  o.add(cmd, "--channels", n.channels, n.resolved.channels, "CNN: number of kernels");
  o.add(cmd, "--pool", n.pool, n.resolved.pool, "CNN: pooling window");
  o.add(cmd, "--pool-mode", n.pool_mode, n.pool_mode_text, "CNN: max or mean pooling");
  o.add(cmd, "--vp-init", n.vp_init, n.vp_init_text, "VPNet: fixed, grid or pretrain");
  o.add(cmd, "--vp-mode", n.vp_mode, n.vp_mode_text, "VPNet: feature or filter layer");
  o.add(cmd, "--vp-tau", n.vp_tau, n.resolved.theta.tau, "VPNet: initial tau for --vp-init fixed");
  o.add(cmd, "--vp-lambda", n.vp_lambda, n.resolved.theta.lambda, "VPNet: initial lambda for --vp-init fixed");
}

// Config-file strings come first; the override list then replaces them with flags.
void seed_network_text(const ConfigFile& cfg, NetworkArgs& n) {
  if (auto v = cfg.text("arch")) n.arch_text = *v;
  if (auto v = cfg.text("pool_mode")) n.pool_mode_text = *v;
  if (auto v = cfg.text("vp_init")) n.vp_init_text = *v;
  if (auto v = cfg.text("vp_mode")) n.vp_mode_text = *v;
}

void finish_network(NetworkArgs& n) {
  const auto kind = arch_kind_from_string(n.arch_text);
  if (!kind) throw UsageError("--arch must be vpnet, fcnn or cnn");
  n.resolved.kind = *kind;
  if (n.pool_mode_text == "max") n.resolved.pool_mode = LayerKind::pool_max;
  else if (n.pool_mode_text == "mean") n.resolved.pool_mode = LayerKind::pool_mean;
  else throw UsageError("--pool-mode must be max or mean");
  const auto init = vp_init_from_string(n.vp_init_text);
  if (!init) throw UsageError("--vp-init must be fixed, grid or pretrain");
  n.resolved.init = *init;
  if (n.vp_mode_text == "feature") n.resolved.vp_mode = LayerKind::vp_feature;
  else if (n.vp_mode_text == "filter") n.resolved.vp_mode = LayerKind::vp_filter;
  else throw UsageError("--vp-mode must be feature or filter");
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string config;
  std::string train_path;
  std::string test_path;
  std::string checkpoint = "model.ckpt";
  std::string report = "report.csv";
  std::optional<std::size_t> heartbeats;
  double learning_rate = 1e-3;
  double alpha = 0.1;
  std::size_t batch_size = 512;
  std::size_t epochs = 100;
  std::uint64_t seed = 0;
  NetworkArgs net;
  TrainConfig train;
  Overrides overrides;
};

void add_train_flags(CLI::App& cmd, TrainArgs& a) {
  a.overrides.add(cmd, "--learning-rate", a.learning_rate, a.train.learning_rate, "Adam learning rate");
  a.overrides.add(cmd, "--alpha", a.alpha, a.train.vp_penalty_alpha, "VP reconstruction penalty weight");
  a.overrides.add(cmd, "--batch-size", a.batch_size, a.train.batch_size, "Mini-batch size");
  a.overrides.add(cmd, "--epochs", a.epochs, a.train.epochs, "Training epochs");
  a.overrides.add(cmd, "--seed", a.seed, a.train.seed, "Seed for initialization and shuffling");
}

void add_train(CLI::App& app, TrainArgs& a) {
  auto* cmd = app.add_subcommand("train", "Train a network and write a checkpoint and per-epoch report");
  cmd->add_option("--config", a.config, "Configuration file (key = value)");
  cmd->add_option("--train", a.train_path, "Training dataset CSV")->required();
  cmd->add_option("--test", a.test_path, "Test dataset CSV")->required();
  cmd->add_option("--checkpoint", a.checkpoint, "Output checkpoint path")->capture_default_str();
  cmd->add_option("--report", a.report, "Output per-epoch report CSV")->capture_default_str();
  cmd->add_option("--heartbeats", a.heartbeats, "Treat inputs as heartbeat windows of this length (labels 0/1)");
  add_train_flags(*cmd, a);
  add_network_flags(*cmd, a.net, a.overrides);
}

void resolve_train(TrainArgs& a) {
  const ConfigFile cfg = load_config(a.config);
  with_config_errors([&] {
    cfg.apply(a.train);
    cfg.apply(a.net.resolved);
  });
  seed_network_text(cfg, a.net);
  a.overrides.apply();
  finish_network(a.net);
  try {
    a.train.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

int run_train(TrainArgs& a) {
  resolve_train(a);
  const LabeledDataset train_data = load_data(a.train_path, a.heartbeats);
  const LabeledDataset test_data = load_data(a.test_path, a.heartbeats, train_data.class_count);
  if (test_data.signal_length() != train_data.signal_length())
    throw UsageError("train and test signal lengths differ");

  const auto t0 = std::chrono::steady_clock::now();
  Network net = build_network(a.net.resolved, train_data, a.train.seed);
  const TrainReport report = train(net, train_data, test_data, a.train);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  write_text(a.report, [&](std::ostream& os) { write_report_csv(os, report); });
  save_checkpoint(Checkpoint::from(net, a.train), a.checkpoint);

  std::cout << a.net.resolved.label() << " parameters=" << net.parameter_count() << " epochs=" << report.epochs_run()
            << '\n';
  if (VpLayer* vp = net.vp_layer())
    std::cout << "tau=" << fmt("%.6g", vp->theta().tau) << " lambda=" << fmt("%.6g", vp->theta().lambda) << '\n';
  if (report.epochs_run() > 0) {
    std::cout << "final train_loss=" << fmt("%.6g", report.train_loss.back())
              << " train_acc=" << fmt("%.6f", report.train_accuracy.back())
              << " test_acc=" << fmt("%.6f", report.final_test_accuracy()) << '\n';
    write_metrics_summary(std::cout, report.final_test);
  }
  std::cout << "wall_clock_seconds=" << fmt("%.2f", seconds) << '\n';
  if (report.diverged) {
    std::cerr << "error: training diverged at epoch " << report.diverged_epoch + 1 << ": " << report.divergence_reason
              << '\n';
    return kExitDiverged;
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::optional<std::size_t> heartbeats;
};

void add_evaluate(CLI::App& app, EvaluateArgs& a) {
  auto* cmd = app.add_subcommand("evaluate", "Accuracy and per-class Se / +P of a checkpoint on a dataset");
  cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint path")->required();
  cmd->add_option("--data", a.data, "Dataset CSV")->required();
  cmd->add_option("--out", a.out, "Also write the summary to this file");
  cmd->add_option("--heartbeats", a.heartbeats, "Treat input as heartbeat windows of this length (labels 0/1)");
}

int run_evaluate(EvaluateArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  Network net = ckpt.network();
  const LabeledDataset data = load_data(a.data, a.heartbeats, net.spec().output_size());
  if (data.signal_length() != net.spec().input_length)
    throw UsageError("dataset signal length " + std::to_string(data.signal_length()) +
                     " does not match the network input " + std::to_string(net.spec().input_length));
  const EvalResult r = evaluate(net, data);
  write_metrics_summary(std::cout, r);
  if (!a.out.empty()) write_text(a.out, [&](std::ostream& os) { write_metrics_summary(os, r); });
  return 0;
}

// ---------------------------------------------------------------- gridsearch

struct GridArgs {
  std::string config;
  std::string train_path;
  std::string test_path;
  std::string out = "grid.csv";
  std::string archs = "vpnet";
  std::string learning_rates = "1e-4,3e-4,1e-3,3e-3,1e-2";
  std::string vp_dims = "7";
  std::string hiddens = "8";
  std::string kernels = "5";
  std::string inits = "grid";
  std::size_t channels = 1;
  std::size_t pool = 4;
  std::size_t jobs = 1;
  std::optional<std::size_t> heartbeats;
  TrainArgs train;  // shared training flags
};

void add_gridsearch(CLI::App& app, GridArgs& a) {
  auto* cmd = app.add_subcommand("gridsearch", "Train every (architecture, learning rate) pair and rank them");
  cmd->add_option("--config", a.config, "Configuration file (key = value)");
  cmd->add_option("--train", a.train_path, "Training dataset CSV")->required();
  cmd->add_option("--test", a.test_path, "Test dataset CSV")->required();
  cmd->add_option("--out", a.out, "Output ranking CSV")->capture_default_str();
  cmd->add_option("--archs", a.archs, "Comma list of vpnet, fcnn, cnn")->capture_default_str();
  cmd->add_option("--learning-rates", a.learning_rates, "Comma list of learning rates")->capture_default_str();
  cmd->add_option("--vp-dims", a.vp_dims, "VPNet: comma list of n values")->capture_default_str();
  cmd->add_option("--hiddens", a.hiddens, "Comma list of hidden widths")->capture_default_str();
  cmd->add_option("--kernels", a.kernels, "CNN: comma list of kernel widths")->capture_default_str();
  cmd->add_option("--inits", a.inits, "VPNet: comma list of fixed, grid, pretrain")->capture_default_str();
  cmd->add_option("--channels", a.channels, "CNN: number of kernels")->capture_default_str();
  cmd->add_option("--pool", a.pool, "CNN: max-pooling window")->capture_default_str();
  cmd->add_option("--jobs", a.jobs, "Configurations trained concurrently")->capture_default_str();
  cmd->add_option("--heartbeats", a.heartbeats, "Treat inputs as heartbeat windows of this length (labels 0/1)");
  add_train_flags(*cmd, a.train);
}

int run_gridsearch(GridArgs& a) {
  const ConfigFile cfg = load_config(a.config);
  with_config_errors([&] { cfg.apply(a.train.train); });
  a.train.overrides.apply();
  try {
    a.train.train.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  GridSpace space;
  space.learning_rates = parse_list<double>(a.learning_rates, "--learning-rates");
  for (auto name : vpnet::detail::split(a.archs, ',')) {
    const auto kind = arch_kind_from_string(vpnet::detail::trim(name));
    if (!kind) throw UsageError("--archs: unknown architecture `" + std::string(name) + "`");
    const auto hiddens = parse_list<std::size_t>(a.hiddens, "--hiddens");
    if (*kind == ArchKind::vpnet) {
      std::vector<VpInit> inits;
      for (auto s : vpnet::detail::split(a.inits, ',')) {
        const auto init = vp_init_from_string(vpnet::detail::trim(s));
        if (!init) throw UsageError("--inits: unknown strategy `" + std::string(s) + "`");
        inits.push_back(*init);
      }
      for (const auto& arch : vpnet_architectures(parse_list<std::size_t>(a.vp_dims, "--vp-dims"), hiddens, inits))
        space.architectures.push_back(arch);
    } else {
      for (std::size_t h : hiddens) {
        if (*kind == ArchKind::fcnn) {
          ArchConfig arch;
          arch.kind = ArchKind::fcnn;
          arch.hidden = h;
          space.architectures.push_back(arch);
          continue;
        }
        for (std::size_t k : parse_list<std::size_t>(a.kernels, "--kernels")) {
          ArchConfig arch;
          arch.kind = ArchKind::cnn;
          arch.hidden = h;
          arch.kernel = k;
          arch.channels = a.channels;
          arch.pool = a.pool;
          space.architectures.push_back(arch);
        }
      }
    }
  }

  const LabeledDataset train_data = load_data(a.train_path, a.heartbeats);
  const LabeledDataset test_data = load_data(a.test_path, a.heartbeats, train_data.class_count);
  const auto t0 = std::chrono::steady_clock::now();
  const auto ranked = grid_search(space, train_data, test_data, a.train.train, a.jobs);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_text(a.out, [&](std::ostream& os) { write_grid_csv(os, ranked); });
  std::cout << "configurations=" << ranked.size() << " wall_clock_seconds=" << fmt("%.2f", seconds) << '\n';
  for (std::size_t i = 0; i < std::min<std::size_t>(5, ranked.size()); ++i)
    std::cout << "#" << ranked[i].rank << ' ' << ranked[i].arch.label() << " lr=" << fmt("%g", ranked[i].learning_rate)
              << " params=" << ranked[i].parameters << " test_acc=" << fmt("%.6f", ranked[i].test_accuracy) << '\n';
  return 0;
}

// ---------------------------------------------------------------- inspect

struct InspectArgs {
  std::string checkpoint;
  std::string data;
  std::string samples = "0";
  std::string recon;
  std::optional<std::size_t> heartbeats;
};

void add_inspect(CLI::App& app, InspectArgs& a) {
  auto* cmd = app.add_subcommand("inspect", "VP layer parameters, coefficients and reconstructions for samples");
  cmd->add_option("--checkpoint", a.checkpoint, "Checkpoint with a leading VP layer")->required();
  cmd->add_option("--data", a.data, "Dataset CSV")->required();
  cmd->add_option("--samples", a.samples, "Comma list of sample indices")->capture_default_str();
  cmd->add_option("--recon", a.recon,
                  "Reconstruction CSV: rows x<i> (original) and xhat<i> (projection), m sample columns each");
  cmd->add_option("--heartbeats", a.heartbeats, "Treat input as heartbeat windows of this length (labels 0/1)");
}

int run_inspect(InspectArgs& a) {
  const Checkpoint ckpt = load_checkpoint(a.checkpoint);
  Network net = ckpt.network();
  VpLayer* vp = net.vp_layer();
  if (!vp) throw UsageError("checkpoint has no leading VP layer");
  const LabeledDataset data = load_data(a.data, a.heartbeats, net.spec().output_size());
  if (data.signal_length() != net.spec().input_length)
    throw UsageError("dataset signal length does not match the network input");
  const auto indices = parse_list<std::size_t>(a.samples, "--samples");
  for (std::size_t i : indices)
    if (i >= data.size())
      throw UsageError("--samples: index " + std::to_string(i) + " out of range [0, " + std::to_string(data.size()) +
                       ")");

  const PinvBundle& b = vp->bundle();
  std::cout << "tau=" << fmt("%.9g", vp->theta().tau) << " lambda=" << fmt("%.9g", vp->theta().lambda)
            << " n=" << b.cols() << '\n';
  std::cout << "sample,label,r2_ratio";
  for (Index k = 0; k < b.cols(); ++k) std::cout << ",c" << k;
  std::cout << '\n';
  Matrix x(b.rows(), static_cast<Index>(indices.size()));
  for (std::size_t j = 0; j < indices.size(); ++j)
    x.col(static_cast<Index>(j)) = data.signals.row(static_cast<Index>(indices[j])).transpose();
  const Matrix c = coefficients(x, b);
  const Matrix xhat = b.phi * c;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const Index col = static_cast<Index>(j);
    const double energy = x.col(col).squaredNorm();
    const double ratio = energy > 0.0 ? (x.col(col) - xhat.col(col)).squaredNorm() / energy : 0.0;
    std::cout << indices[j] << ',' << data.labels[indices[j]] << ',' << fmt("%.6g", ratio);
    for (Index k = 0; k < c.rows(); ++k) std::cout << ',' << fmt("%.6g", c(k, col));
    std::cout << '\n';
  }
  if (!a.recon.empty()) {
    write_text(a.recon, [&](std::ostream& os) {
      os << "row";
      for (Index r = 0; r < x.rows(); ++r) os << ",s" << r;
      os << '\n';
      for (Index j = 0; j < x.cols(); ++j)
        for (const Matrix* m : std::array<const Matrix*, 2>{&x, &xhat}) {
          os << (m == &x ? "x" : "xhat") << indices[static_cast<std::size_t>(j)];
          for (Index r = 0; r < x.rows(); ++r) os << ',' << fmt("%.17g", (*m)(r, j));
          os << '\n';
        }
    });
  }
  return 0;
}

// ---------------------------------------------------------------- condsweep

struct CondArgs {
  std::size_t m = 1000;
  std::size_t n = 3;
  std::string tau = "500:1100:61";
  std::string lambda = "0.012:0.05:39";
  std::string out;
};

void add_condsweep(CLI::App& app, CondArgs& a) {
  auto* cmd = app.add_subcommand("condsweep", "Condition number of the adaptive Hermite basis over (tau, lambda)");
  cmd->add_option("--m", a.m, "Number of samples on the grid [0, m-1]")->capture_default_str();
  cmd->add_option("--n", a.n, "Number of Hermite functions")->capture_default_str();
  cmd->add_option("--tau", a.tau, "tau range start:stop:count")->capture_default_str();
  cmd->add_option("--lambda", a.lambda, "lambda range start:stop:count")->capture_default_str();
  cmd->add_option("--out", a.out, "Output CSV (stdout when omitted)");
}

int run_condsweep(CondArgs& a) {
  const auto taus = parse_range(a.tau, "--tau");
  const auto lambdas = parse_range(a.lambda, "--lambda");
  if (a.m < 2 || a.n < 1 || a.n > a.m) throw UsageError("condsweep: need m >= 2 and 1 <= n <= m");
  for (double l : lambdas)
    if (!(l > 0.0)) throw UsageError("--lambda: values must be > 0");
  const auto rows = condition_sweep(SampleGrid::index(a.m), a.n, taus, lambdas);
  if (a.out.empty()) {
    write_condition_csv(std::cout, rows);
  } else {
    write_text(a.out, [&](std::ostream& os) { write_condition_csv(os, rows); });
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Variable projection networks: data generation, training and diagnostics"};
  app.require_subcommand(1);
  GenerateArgs generate_args;
  TrainArgs train_args;
  EvaluateArgs evaluate_args;
  GridArgs grid_args;
  InspectArgs inspect_args;
  CondArgs cond_args;
  add_generate(app, generate_args);
  add_train(app, train_args);
  add_evaluate(app, evaluate_args);
  add_gridsearch(app, grid_args);
  add_inspect(app, inspect_args);
  add_condsweep(app, cond_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    const std::string name = app.get_subcommands().front()->get_name();
    if (name == "generate") return run_generate(generate_args);
    if (name == "train") return run_train(train_args);
    if (name == "evaluate") return run_evaluate(evaluate_args);
    if (name == "gridsearch") return run_gridsearch(grid_args);
    if (name == "inspect") return run_inspect(inspect_args);
    if (name == "condsweep") return run_condsweep(cond_args);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}
