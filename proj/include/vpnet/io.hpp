#pragma once

// Text formats: dataset CSV, metadata CSV, versioned checkpoints and
// `key = value` configuration files. Every number is written with 17
// significant digits so doubles round-trip exactly.

#include "vpnet/synth.hpp"
#include "vpnet/training.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace vpnet {

namespace detail {

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Strict decimal parse: the whole field must be consumed and the value finite.
inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

template <typename Int>
std::optional<Int> parse_int(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  Int v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path, 0, 0, "cannot open file for reading");
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError(path, 0, 0, "cannot open file for writing");
  return out;
}

inline void finish_output(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw DataError(path, 0, 0, "write failed");
}

}  // namespace detail

// ---------------------------------------------------------------- datasets

/// Header `label,s0,...,s{m-1}`, one sample per row.
inline void write_dataset(std::ostream& os, const LabeledDataset& data) {
  os << "label";
  for (std::size_t j = 0; j < data.signal_length(); ++j) os << ",s" << j;
  os << '\n';
  for (std::size_t i = 0; i < data.size(); ++i) {
    os << data.labels[i];
    for (Index j = 0; j < data.signals.cols(); ++j)
      os << ',' << detail::format_double(data.signals(static_cast<Index>(i), j));
    os << '\n';
  }
}

/// Parses the dataset CSV. Without `class_count` the arity is max label + 1;
/// with it, labels outside [0, class_count) are rejected.
inline LabeledDataset read_dataset(std::istream& is, const std::string& source,
                                   std::optional<std::size_t> class_count = std::nullopt) {
  std::string line;
  if (!std::getline(is, line)) throw DataError(source, 1, 0, "empty file, expected header `label,s0,...`");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split(line, ',');
  if (header.size() < 2 || detail::trim(header[0]) != "label")
    throw DataError(source, 1, 1, "header must start with `label` followed by sample columns");
  for (std::size_t j = 1; j < header.size(); ++j)
    if (detail::trim(header[j]) != "s" + std::to_string(j - 1))
      throw DataError(source, 1, j + 1,
                      "unknown header field `" + std::string(header[j]) + "`, expected `s" + std::to_string(j - 1) + "`");
  const std::size_t m = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto fields = detail::split(line, ',');
    if (fields.size() != m + 1)
      throw DataError(source, line_no, 0,
                      "row has " + std::to_string(fields.size() - 1) + " samples, expected " + std::to_string(m));
    const auto label = detail::parse_int<int>(fields[0]);
    if (!label || *label < 0) throw DataError(source, line_no, 1, "label must be a non-negative integer");
    if (class_count && static_cast<std::size_t>(*label) >= *class_count)
      throw DataError(source, line_no, 1,
                      "label " + std::to_string(*label) + " outside [0, " + std::to_string(*class_count) + ")");
    labels.push_back(*label);
    for (std::size_t j = 1; j <= m; ++j) {
      const auto v = detail::parse_double(fields[j]);
      if (!v) throw DataError(source, line_no, j + 1, "malformed numeric field `" + std::string(fields[j]) + "`");
      values.push_back(*v);
    }
  }
  if (labels.empty()) throw DataError(source, line_no, 0, "no data rows");

  LabeledDataset out;
  out.labels = std::move(labels);
  out.signals = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      values.data(), static_cast<Index>(out.labels.size()), static_cast<Index>(m));
  out.class_count = class_count.value_or(static_cast<std::size_t>(*std::max_element(out.labels.begin(), out.labels.end())) + 1);
  return out;
}

inline void save_dataset(const LabeledDataset& data, const std::string& path) {
  auto out = detail::open_output(path);
  write_dataset(out, data);
  detail::finish_output(out, path);
}

inline LabeledDataset load_dataset(const std::string& path, std::optional<std::size_t> class_count = std::nullopt) {
  auto in = detail::open_input(path);
  return read_dataset(in, path, class_count);
}

/// Heartbeat windows: labels {0 = normal, 1 = VEB}, exactly `window` samples per row.
inline LabeledDataset read_heartbeats(std::istream& is, const std::string& source, std::size_t window = 100) {
  LabeledDataset data = read_dataset(is, source, 2);
  if (data.signal_length() != window)
    throw DataError(source, 1, 0,
                    "heartbeat window has " + std::to_string(data.signal_length()) + " samples, expected " +
                        std::to_string(window));
  return data;
}

inline LabeledDataset load_heartbeats(const std::string& path, std::size_t window = 100) {
  auto in = detail::open_input(path);
  return read_heartbeats(in, path, window);
}

/// Per-sample metadata with the dataset's column names as header.
inline void write_meta(std::ostream& os, const LabeledDataset& data) {
  for (std::size_t j = 0; j < data.meta_columns.size(); ++j) os << (j ? "," : "") << data.meta_columns[j];
  os << '\n';
  for (Index i = 0; i < data.meta.rows(); ++i) {
    for (Index j = 0; j < data.meta.cols(); ++j) os << (j ? "," : "") << detail::format_double(data.meta(i, j));
    os << '\n';
  }
}

// ---------------------------------------------------------------- checkpoints

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  int version = kCheckpointVersion;
  NetworkSpec spec;
  std::vector<Vector> parameters;  // one flat vector per layer
  TrainConfig config;

  static Checkpoint from(const Network& net, const TrainConfig& config) {
    Checkpoint c;
    c.spec = net.spec();
    c.config = config;
    for (std::size_t i = 0; i < net.size(); ++i) c.parameters.push_back(net.layer(i).parameters());
    return c;
  }

  Network network() const {
    Network net(spec);
    for (std::size_t i = 0; i < net.size(); ++i) net.layer(i).set_parameters(parameters.at(i));
    return net;
  }
};

/// Line-oriented text:
///   vpnet-checkpoint <version>
///   network <input_length> <a> <b> <layer count>
///   layer <kind> <input> <output> <basis> <in_channels> <channels> <kernel> <pool> <tau0> <lambda0>
///   params <count> <values...>          (one per layer, after its layer line)
///   train <lr> <alpha> <batch> <epochs> <seed> <beta1> <beta2> <epsilon>
///   end
inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  using detail::format_double;
  if (c.parameters.size() != c.spec.layers.size())
    throw InvalidArgument("write_checkpoint: parameter vectors do not match the layer count");
  os << "vpnet-checkpoint " << c.version << '\n';
  os << "network " << c.spec.input_length << ' ' << format_double(c.spec.interval_a) << ' '
     << format_double(c.spec.interval_b) << ' ' << c.spec.layers.size() << '\n';
  for (std::size_t i = 0; i < c.spec.layers.size(); ++i) {
    const LayerSpec& l = c.spec.layers[i];
    os << "layer " << to_string(l.kind) << ' ' << l.input << ' ' << l.output << ' ' << l.basis << ' ' << l.in_channels
       << ' ' << l.channels << ' ' << l.kernel << ' ' << l.pool << ' ' << format_double(l.vp_init.tau) << ' '
       << format_double(l.vp_init.lambda) << '\n';
    os << "params " << c.parameters[i].size();
    for (Index k = 0; k < c.parameters[i].size(); ++k) os << ' ' << format_double(c.parameters[i](k));
    os << '\n';
  }
  const TrainConfig& t = c.config;
  os << "train " << format_double(t.learning_rate) << ' ' << format_double(t.vp_penalty_alpha) << ' '
     << t.batch_size << ' ' << t.epochs << ' ' << t.seed << ' ' << format_double(t.adam.beta1) << ' '
     << format_double(t.adam.beta2) << ' ' << format_double(t.adam.epsilon) << '\n';
  os << "end\n";
}

namespace detail {

class TokenLine {
 public:
  TokenLine(std::istream& is, const std::string& source, std::size_t& line_no, std::string_view expect)
      : source_(source) {
    std::string line;
    if (!std::getline(is, line))
      throw DataError(source, line_no + 1, 0, "unexpected end of file, expected `" + std::string(expect) + "`");
    line_ = ++line_no;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) tokens_.push_back(tok);
    if (tokens_.empty() || tokens_[0] != expect)
      throw DataError(source, line_, 1, "expected `" + std::string(expect) + "`");
  }

  std::size_t size() const { return tokens_.size(); }

  void require(std::size_t count) const {
    if (tokens_.size() != count)
      throw DataError(source_, line_, 0,
                      "expected " + std::to_string(count - 1) + " fields after `" + tokens_[0] + "`, found " +
                          std::to_string(tokens_.size() - 1));
  }

  const std::string& text(std::size_t i) const { return tokens_.at(i); }

  double real(std::size_t i) const {
    const auto v = parse_double(tokens_.at(i));
    if (!v) throw DataError(source_, line_, i + 1, "malformed number `" + tokens_[i] + "`");
    return *v;
  }

  template <typename Int = std::size_t>
  Int integer(std::size_t i) const {
    const auto v = parse_int<Int>(tokens_.at(i));
    if (!v) throw DataError(source_, line_, i + 1, "malformed integer `" + tokens_[i] + "`");
    return *v;
  }

  std::size_t line() const { return line_; }

 private:
  std::string source_;
  std::size_t line_ = 0;
  std::vector<std::string> tokens_;
};

}  // namespace detail

inline Checkpoint read_checkpoint(std::istream& is, const std::string& source) {
  std::size_t line_no = 0;
  Checkpoint c;
  {
    detail::TokenLine h(is, source, line_no, "vpnet-checkpoint");
    h.require(2);
    c.version = h.integer<int>(1);
    if (c.version != kCheckpointVersion)
      throw DataError(source, h.line(), 2,
                      "unsupported checkpoint version " + std::to_string(c.version) + " (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  std::size_t layer_count = 0;
  {
    detail::TokenLine n(is, source, line_no, "network");
    n.require(5);
    c.spec.input_length = n.integer(1);
    c.spec.interval_a = n.real(2);
    c.spec.interval_b = n.real(3);
    layer_count = n.integer(4);
    if (layer_count == 0 || layer_count > 4096) throw DataError(source, n.line(), 5, "implausible layer count");
  }
  for (std::size_t i = 0; i < layer_count; ++i) {
    detail::TokenLine l(is, source, line_no, "layer");
    l.require(11);
    const auto kind = layer_kind_from_string(l.text(1));
    if (!kind) throw DataError(source, l.line(), 2, "unknown layer kind `" + l.text(1) + "`");
    LayerSpec s;
    s.kind = *kind;
    s.input = l.integer(2);
    s.output = l.integer(3);
    s.basis = l.integer(4);
    s.in_channels = l.integer(5);
    s.channels = l.integer(6);
    s.kernel = l.integer(7);
    s.pool = l.integer(8);
    s.vp_init = {l.real(9), l.real(10)};
    c.spec.layers.push_back(s);

    detail::TokenLine p(is, source, line_no, "params");
    if (p.size() < 2) throw DataError(source, p.line(), 0, "missing parameter count");
    const std::size_t count = p.integer(1);
    if (count != s.parameter_count())
      throw DataError(source, p.line(), 2,
                      "layer " + std::to_string(i) + " needs " + std::to_string(s.parameter_count()) +
                          " parameters, file declares " + std::to_string(count));
    p.require(count + 2);
    Vector v(static_cast<Index>(count));
    for (std::size_t k = 0; k < count; ++k) v(static_cast<Index>(k)) = p.real(k + 2);
    c.parameters.push_back(std::move(v));
  }
  {
    detail::TokenLine t(is, source, line_no, "train");
    t.require(9);
    c.config.learning_rate = t.real(1);
    c.config.vp_penalty_alpha = t.real(2);
    c.config.batch_size = t.integer(3);
    c.config.epochs = t.integer(4);
    c.config.seed = t.integer<std::uint64_t>(5);
    c.config.adam = {t.real(6), t.real(7), t.real(8)};
  }
  {
    detail::TokenLine e(is, source, line_no, "end");
    e.require(1);
  }
  try {
    c.spec.validate();
  } catch (const InvalidArgument& e) {
    throw DataError(source, 0, 0, std::string("inconsistent network: ") + e.what());
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  auto out = detail::open_output(path);
  write_checkpoint(out, c);
  detail::finish_output(out, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  auto in = detail::open_input(path);
  return read_checkpoint(in, path);
}

// ---------------------------------------------------------------- config files

/// Recognized configuration keys.
inline const std::vector<std::string_view>& config_keys() {
  static const std::vector<std::string_view> keys{
      // training
      "learning_rate", "vp_penalty_alpha", "batch_size", "epochs", "seed", "adam_beta1", "adam_beta2",
      "adam_epsilon",
      // synthetic data
      "samples_per_class", "m", "n_gen", "shell_radii", "shell_thickness", "nuisance_std", "tau_mean", "tau_std",
      "lambda_mean", "lambda_std",
      // network
      "arch", "vp_dim", "hidden", "hidden2", "kernel", "channels", "pool", "pool_mode", "vp_init", "vp_tau",
      "vp_lambda", "vp_mode"};
  return keys;
}

/// `key = value` lines; `#` starts a comment. Unknown and repeated keys are errors.
class ConfigFile {
 public:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  ConfigFile() = default;

  static ConfigFile parse(std::istream& is, const std::string& source) {
    ConfigFile cfg;
    cfg.source_ = source;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(is, raw)) {
      ++line_no;
      std::string_view line = raw;
      if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw DataError(source, line_no, 1, "expected `key = value`");
      const std::string key(detail::trim(line.substr(0, eq)));
      const std::string value(detail::trim(line.substr(eq + 1)));
      const auto& keys = config_keys();
      if (std::find(keys.begin(), keys.end(), key) == keys.end())
        throw DataError(source, line_no, 1, "unknown configuration key `" + key + "`");
      if (value.empty()) throw DataError(source, line_no, eq + 2, "missing value for `" + key + "`");
      if (cfg.entries_.count(key)) throw DataError(source, line_no, 1, "duplicate key `" + key + "`");
      cfg.entries_[key] = {value, line_no};
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    auto in = detail::open_input(path);
    return parse(in, path);
  }

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  std::optional<double> real(const std::string& key) const {
    const auto* e = find(key);
    if (!e) return std::nullopt;
    const auto v = detail::parse_double(e->value);
    if (!v) throw DataError(source_, e->line, 0, "`" + key + "` must be a number");
    return v;
  }

  std::optional<std::uint64_t> integer(const std::string& key) const {
    const auto* e = find(key);
    if (!e) return std::nullopt;
    const auto v = detail::parse_int<std::uint64_t>(e->value);
    if (!v) throw DataError(source_, e->line, 0, "`" + key + "` must be a non-negative integer");
    return v;
  }

  std::optional<std::string> text(const std::string& key) const {
    const auto* e = find(key);
    if (!e) return std::nullopt;
    return e->value;
  }

  std::optional<std::vector<double>> reals(const std::string& key) const {
    const auto* e = find(key);
    if (!e) return std::nullopt;
    std::vector<double> out;
    for (auto field : detail::split(e->value, ',')) {
      const auto v = detail::parse_double(field);
      if (!v) throw DataError(source_, e->line, 0, "`" + key + "` must be a comma-separated list of numbers");
      out.push_back(*v);
    }
    return out;
  }

  void apply(TrainConfig& t) const {
    if (auto v = real("learning_rate")) t.learning_rate = *v;
    if (auto v = real("vp_penalty_alpha")) t.vp_penalty_alpha = *v;
    if (auto v = integer("batch_size")) t.batch_size = *v;
    if (auto v = integer("epochs")) t.epochs = *v;
    if (auto v = integer("seed")) t.seed = *v;
    if (auto v = real("adam_beta1")) t.adam.beta1 = *v;
    if (auto v = real("adam_beta2")) t.adam.beta2 = *v;
    if (auto v = real("adam_epsilon")) t.adam.epsilon = *v;
  }

  void apply(SynthConfig& s) const {
    if (auto v = integer("samples_per_class")) s.samples_per_class = *v;
    if (auto v = integer("m")) s.m = *v;
    if (auto v = integer("n_gen")) s.n_gen = *v;
    if (auto v = reals("shell_radii")) {
      if (v->size() != 3) throw DataError(source_, find("shell_radii")->line, 0, "`shell_radii` needs three values");
      std::copy(v->begin(), v->end(), s.shell_radii.begin());
    }
    if (auto v = real("shell_thickness")) s.shell_thickness = *v;
    if (auto v = real("nuisance_std")) s.nuisance_std = *v;
    if (auto v = real("tau_mean")) s.tau_mean = *v;
    if (auto v = real("tau_std")) s.tau_std = *v;
    if (auto v = real("lambda_mean")) s.lambda_mean = *v;
    if (auto v = real("lambda_std")) s.lambda_std = *v;
    if (auto v = integer("seed")) s.seed = *v;
  }

  void apply(ArchConfig& a) const {
    if (auto v = text("arch")) {
      const auto k = arch_kind_from_string(*v);
      if (!k) throw DataError(source_, find("arch")->line, 0, "`arch` must be vpnet, fcnn or cnn");
      a.kind = *k;
    }
    if (auto v = integer("vp_dim")) a.vp_dim = *v;
    if (auto v = integer("hidden")) a.hidden = *v;
    if (auto v = integer("hidden2")) a.hidden2 = *v;
    if (auto v = integer("kernel")) a.kernel = *v;
    if (auto v = integer("channels")) a.channels = *v;
    if (auto v = integer("pool")) a.pool = *v;
    if (auto v = text("pool_mode")) {
      if (*v == "max") a.pool_mode = LayerKind::pool_max;
      else if (*v == "mean") a.pool_mode = LayerKind::pool_mean;
      else throw DataError(source_, find("pool_mode")->line, 0, "`pool_mode` must be max or mean");
    }
    if (auto v = text("vp_init")) {
      const auto k = vp_init_from_string(*v);
      if (!k) throw DataError(source_, find("vp_init")->line, 0, "`vp_init` must be fixed, grid or pretrain");
      a.init = *k;
    }
    if (auto v = real("vp_tau")) a.theta.tau = *v;
    if (auto v = real("vp_lambda")) a.theta.lambda = *v;
    if (auto v = text("vp_mode")) {
      if (*v == "feature") a.vp_mode = LayerKind::vp_feature;
      else if (*v == "filter") a.vp_mode = LayerKind::vp_filter;
      else throw DataError(source_, find("vp_mode")->line, 0, "`vp_mode` must be feature or filter");
    }
  }

 private:
  const Entry* find(const std::string& key) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::string source_;
  std::map<std::string, Entry> entries_;
};

}  // namespace vpnet
