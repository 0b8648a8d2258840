#include "test_support.hpp"

#include <fstream>
#include <sstream>

namespace vpnet {
namespace {

using testing::random_matrix;
using testing::temp_path;

LabeledDataset small_dataset(std::mt19937_64& rng, std::size_t rows, std::size_t m, std::size_t classes) {
  LabeledDataset d;
  d.class_count = classes;
  d.signals = random_matrix(rng, static_cast<Index>(rows), static_cast<Index>(m));
  for (std::size_t i = 0; i < rows; ++i) d.labels.push_back(static_cast<int>(i % classes));
  return d;
}

template <typename F>
DataError expect_data_error(F&& f) {
  try {
    f();
  } catch (const DataError& e) {
    return e;
  }
  ADD_FAILURE() << "expected DataError";
  return DataError("", 0, 0, "");
}

TEST(DatasetIo, RoundTripIsBitwise) {
  std::mt19937_64 rng(1);
  LabeledDataset d = small_dataset(rng, 7, 5, 3);
  d.signals(0, 0) = 1e-300;
  d.signals(1, 1) = -0.1;
  const std::string path = temp_path("data.csv");
  save_dataset(d, path);
  const LabeledDataset back = load_dataset(path);
  EXPECT_EQ(back.signals, d.signals);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.class_count, 3u);
}

TEST(DatasetIo, ParsesSmallFile) {
  std::istringstream in("label,s0,s1,s2\n0,1,2,3\r\n\n2, 0.5 ,-1e-3,4\n");
  const LabeledDataset d = read_dataset(in, "mem");
  ASSERT_EQ(d.size(), 2u);
  EXPECT_EQ(d.class_count, 3u);
  EXPECT_EQ(d.labels[1], 2);
  EXPECT_EQ(d.signals(1, 0), 0.5);
  EXPECT_EQ(d.signals(1, 1), -1e-3);
}

TEST(DatasetIo, LabelAtClassCountIsRejected) {
  std::istringstream in("label,s0\n0,1\n2,1\n");
  const DataError e = expect_data_error([&] { read_dataset(in, "mem", 2); });
  EXPECT_EQ(e.line(), 3u);
  EXPECT_EQ(e.column(), 1u);
}

TEST(DatasetIo, MalformedFieldReportsLocation) {
  std::istringstream in("label,s0,s1\n0,1,2\n1,3,x4\n");
  const DataError e = expect_data_error([&] { read_dataset(in, "file.csv"); });
  EXPECT_EQ(e.source(), "file.csv");
  EXPECT_EQ(e.line(), 3u);
  EXPECT_EQ(e.column(), 3u);
  EXPECT_NE(std::string(e.what()).find("x4"), std::string::npos);
}

TEST(DatasetIo, RejectsStructuralProblems) {
  for (const char* text : {"", "label,s0\n", "label,s0,s1\n0,1\n", "label,s1\n0,1\n", "lbl,s0\n0,1\n",
                           "label,s0\n-1,1\n", "label,s0\n0,nan\n", "label,s0\n0,inf\n", "label,s0\n0.5,1\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(read_dataset(in, "mem"), DataError) << text;
  }
  EXPECT_THROW(load_dataset(temp_path("missing.csv")), DataError);
}

TEST(HeartbeatIo, WindowContract) {
  std::mt19937_64 rng(2);
  std::ostringstream good;
  write_dataset(good, small_dataset(rng, 4, 100, 2));
  std::istringstream in(good.str());
  EXPECT_EQ(read_heartbeats(in, "mem").class_count, 2u);

  std::ostringstream short_window;
  write_dataset(short_window, small_dataset(rng, 4, 99, 2));
  std::istringstream in99(short_window.str());
  EXPECT_THROW(read_heartbeats(in99, "mem"), DataError);

  std::istringstream empty("");
  EXPECT_THROW(read_heartbeats(empty, "mem"), DataError);

  std::ostringstream three;
  write_dataset(three, small_dataset(rng, 3, 100, 3));
  std::istringstream in3(three.str());
  EXPECT_THROW(read_heartbeats(in3, "mem"), DataError);
}

TEST(HeartbeatIo, BalancedBeatSetsLoad) {
  std::mt19937_64 rng(3);
  const std::string path = temp_path("beats.csv");
  save_dataset(small_dataset(rng, 2 * 4260, 100, 2), path);
  const LabeledDataset d = load_heartbeats(path);
  EXPECT_EQ(d.class_histogram(), (std::vector<std::size_t>{4260, 4260}));
}

TEST(CheckpointIo, RoundTripPreservesNetwork) {
  std::mt19937_64 rng(4);
  std::vector<NetworkSpec> specs = {make_vpnet(100, 7, 8, 3, {49.5, 0.12}), make_fcnn(30, {6, 4}, 2),
                                    make_cnn(40, 3, 5, 4, LayerKind::pool_mean, 6, 3)};
  for (const NetworkSpec& s : specs) {
    Network net(s);
    net.initialize(9);
    TrainConfig cfg;
    cfg.learning_rate = 0.003;
    cfg.seed = 77;
    const std::string path = temp_path("net.ckpt");
    save_checkpoint(Checkpoint::from(net, cfg), path);
    const Checkpoint back = load_checkpoint(path);
    EXPECT_EQ(back.spec.layers, s.layers);
    EXPECT_EQ(back.config.learning_rate, 0.003);
    EXPECT_EQ(back.config.seed, 77u);
    Network restored = back.network();
    EXPECT_EQ(restored.flat_parameters(), net.flat_parameters());
    const Matrix x = random_matrix(rng, static_cast<Index>(s.input_length), 4);
    EXPECT_EQ(restored.forward(x), net.forward(x));
  }
}

TEST(CheckpointIo, ReferenceVpnetHas93Parameters) {
  Network net(make_vpnet(100, 7, 8, 3, {49.5, 0.12}));
  std::ostringstream os;
  write_checkpoint(os, Checkpoint::from(net, {}));
  std::istringstream in(os.str());
  EXPECT_EQ(read_checkpoint(in, "mem").network().parameter_count(), 93u);
}

TEST(CheckpointIo, RejectsTruncationAndVersionMismatch) {
  Network net(make_fcnn(10, {4}, 2));
  net.initialize(1);
  std::ostringstream os;
  write_checkpoint(os, Checkpoint::from(net, {}));
  const std::string text = os.str();

  for (std::size_t cut : {text.size() / 3, text.size() / 2, text.size() - 5}) {
    std::istringstream in(text.substr(0, cut));
    EXPECT_THROW(read_checkpoint(in, "mem"), DataError) << cut;
  }
  std::string future = text;
  future.replace(future.find(" 1\n"), 3, " 2\n");
  std::istringstream in(future);
  const DataError e = expect_data_error([&] { read_checkpoint(in, "mem"); });
  EXPECT_EQ(e.line(), 1u);

  std::string wrong_count = text;
  wrong_count.replace(wrong_count.find("params 44"), 9, "params 43");
  std::istringstream in2(wrong_count);
  EXPECT_THROW(read_checkpoint(in2, "mem"), DataError);
}

TEST(ConfigIo, ParsesKnownKeys) {
  std::istringstream in(
      "# experiment\n"
      "learning_rate = 0.003\n"
      "epochs=7   # short\n"
      "shell_radii = 1, 2.5, 4\n"
      "arch = cnn\n"
      "pool_mode = mean\n"
      "vp_init = fixed\n"
      "vp_tau = 12\n");
  const ConfigFile cfg = ConfigFile::parse(in, "mem");
  TrainConfig t;
  SynthConfig s;
  ArchConfig a;
  cfg.apply(t);
  cfg.apply(s);
  cfg.apply(a);
  EXPECT_EQ(t.learning_rate, 0.003);
  EXPECT_EQ(t.epochs, 7u);
  EXPECT_EQ(t.batch_size, TrainConfig{}.batch_size);
  EXPECT_EQ(s.shell_radii, (std::array<double, 3>{1.0, 2.5, 4.0}));
  EXPECT_EQ(a.kind, ArchKind::cnn);
  EXPECT_EQ(a.pool_mode, LayerKind::pool_mean);
  EXPECT_EQ(a.init, VpInit::fixed);
  EXPECT_EQ(a.theta.tau, 12.0);
}

TEST(ConfigIo, RejectsBadInput) {
  for (const char* text : {"learnin_rate = 1\n", "epochs\n", "epochs = \n", "epochs = 3\nepochs = 4\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(ConfigFile::parse(in, "mem"), DataError) << text;
  }
  auto apply_train = [](const char* text) {
    std::istringstream in(text);
    TrainConfig t;
    ConfigFile::parse(in, "mem").apply(t);
  };
  EXPECT_THROW(apply_train("epochs = -3\n"), DataError);
  EXPECT_THROW(apply_train("learning_rate = fast\n"), DataError);
  std::istringstream radii("shell_radii = 1, 2\n");
  SynthConfig s;
  EXPECT_THROW(ConfigFile::parse(radii, "mem").apply(s), DataError);
}

TEST(MetaIo, WritesColumns) {
  const SynthConfig cfg = [] {
    SynthConfig c;
    c.samples_per_class = 2;
    return c;
  }();
  const SynthData d = generate(cfg);
  std::ostringstream os;
  write_meta(os, d.train);
  const std::string s = os.str();
  EXPECT_EQ(s.substr(0, s.find('\n')), "class,tau,lambda,scale");
  EXPECT_EQ(std::count(s.begin(), s.end(), '\n'), 7);
}

}  // namespace
}  // namespace vpnet
