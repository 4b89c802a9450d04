// SPDX-License-Identifier: Apache-2.0
// Command-line entry point: train, eval, benchmarks, embedding export, synthetic data.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tsiars/checkpoint.hpp"
#include "tsiars/config.hpp"
#include "tsiars/dataio.hpp"
#include "tsiars/error.hpp"
#include "tsiars/evalkit.hpp"
#include "tsiars/report.hpp"
#include "tsiars/trainer.hpp"

namespace fs = std::filesystem;
using namespace tsiars;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct TrainFlags {
  std::string config_path;
  std::string mode, pool, precision;
  std::uint64_t seed = 0;
  std::size_t epochs = 0, batch_size = 0, k = 0, threads = 0, hidden = 0, blocks = 0;
  double alpha = 0.0, mask_prob = 0.0, lr = 0.0;
  std::vector<CLI::Option*> opts;

  CLI::Option* opt(const std::string& name) const {
    const std::string bare = name.substr(name.find_first_not_of('-'));
    for (auto* o : opts)
      if (o->check_lname(bare)) return o;
    return nullptr;
  }
  bool given(const std::string& name) const {
    const auto* o = opt(name);
    return o != nullptr && o->count() > 0;
  }
};

void add_train_flags(CLI::App& cmd, TrainFlags& f) {
  f.opts.push_back(cmd.add_option("--config", f.config_path, "JSON config file; flags override it"));
  f.opts.push_back(cmd.add_option("--mode", f.mode, "hier or iars")->check(CLI::IsMember({"hier", "iars"})));
  f.opts.push_back(cmd.add_option("--seed", f.seed, "Run seed"));
  f.opts.push_back(cmd.add_option("--epochs", f.epochs, "Training epochs"));
  f.opts.push_back(cmd.add_option("--batch-size", f.batch_size, "Batch size"));
  f.opts.push_back(cmd.add_option("--k", f.k, "Embedding dimension"));
  f.opts.push_back(cmd.add_option("--alpha", f.alpha, "Temporal loss weight"));
  f.opts.push_back(cmd.add_option("--pool", f.pool, "max or avg")->check(CLI::IsMember({"max", "avg"})));
  f.opts.push_back(cmd.add_option("--mask-prob", f.mask_prob, "Latent timestamp drop probability"));
  f.opts.push_back(cmd.add_option("--threads", f.threads, "Worker threads (default: IARS_SSL_THREADS or 1)"));
  f.opts.push_back(
      cmd.add_option("--precision", f.precision, "f32 or f64")->check(CLI::IsMember({"f32", "f64"})));
  f.opts.push_back(cmd.add_option("--lr", f.lr, "Adam learning rate"));
  f.opts.push_back(cmd.add_option("--hidden", f.hidden, "Encoder hidden width"));
  f.opts.push_back(cmd.add_option("--blocks", f.blocks, "Residual units"));
}

trainer::TrainConfig resolve(const TrainFlags& f, trainer::TrainConfig cfg = {}) {
  if (!f.config_path.empty()) cfg = config::load_file(f.config_path, cfg);
  if (f.given("--mode")) cfg.mode = trainer::parse_mode(f.mode);
  if (f.given("--seed")) cfg.seed = f.seed;
  if (f.given("--epochs")) cfg.epochs = f.epochs;
  if (f.given("--batch-size")) cfg.batch_size = f.batch_size;
  if (f.given("--k")) cfg.encoder.output_dim = f.k;
  if (f.given("--alpha")) cfg.loss.alpha = f.alpha;
  if (f.given("--pool")) cfg.loss.pool_mode = numerics::parse_pool_mode(f.pool);
  if (f.given("--mask-prob")) cfg.mask_prob = f.mask_prob;
  if (f.given("--precision")) cfg.precision = trainer::parse_precision(f.precision);
  if (f.given("--lr")) cfg.learning_rate = f.lr;
  if (f.given("--hidden")) cfg.encoder.hidden_dim = f.hidden;
  if (f.given("--blocks")) cfg.encoder.num_blocks = f.blocks;
  if (f.given("--threads")) {
    cfg.threads = f.threads;
  } else if (const char* env = std::getenv("IARS_SSL_THREADS"); env != nullptr && f.config_path.empty()) {
    try {
      cfg.threads = std::stoul(env);
    } catch (const std::exception&) {
      throw ConfigError(std::string("IARS_SSL_THREADS is not a number: ") + env);
    }
  }
  cfg.validate();
  return cfg;
}

trainer::RunReport run_fit(const dataio::TimeSeriesDataset& data, const trainer::TrainConfig& cfg,
                           const std::optional<fs::path>& out) {
  if (cfg.precision == trainer::Precision::kF32) return trainer::fit<float>(data, cfg, out).report;
  return trainer::fit<double>(data, cfg, out).report;
}

evalkit::EvalResult run_eval(const dataio::TimeSeriesDataset& train, const dataio::TimeSeriesDataset& test,
                             evalkit::Method method, const std::string& checkpoint, std::size_t window) {
  evalkit::EvalOptions opts;
  if (window > 0) opts.dtw_window = window;
  if (!evalkit::needs_encoder(method)) return evalkit::evaluate_baseline(train, test, method, opts);
  if (checkpoint.empty()) throw ConfigError("method " + evalkit::to_string(method) + " needs --checkpoint");
  if (checkpoint::stored_precision(checkpoint) == "f32") {
    const auto params = checkpoint::load<float>(checkpoint);
    return evalkit::evaluate(train, test, method, &params, opts);
  }
  const auto params = checkpoint::load<double>(checkpoint);
  return evalkit::evaluate(train, test, method, &params, opts);
}

std::pair<dataio::TimeSeriesDataset, dataio::TimeSeriesDataset> normalized(dataio::TimeSeriesDataset train,
                                                                           dataio::TimeSeriesDataset test,
                                                                           bool normalize) {
  if (!normalize) return {std::move(train), std::move(test)};
  auto test_n = dataio::zscore(train, test);
  auto train_n = dataio::zscore(train, train);
  return {std::move(train_n), std::move(test_n)};
}

void print_result(const evalkit::EvalResult& r) {
  std::cout << r.method << " accuracy " << r.accuracy << " (" << r.correct << "/" << r.total << ")\n";
  for (const auto& c : r.per_class) std::cout << "  class " << c.name << ": " << c.correct << "/" << c.total << "\n";
}

int cmd_train(const TrainFlags& f, const std::string& data_path, const std::string& test_path,
              const std::string& out, const std::string& method_name) {
  dataio::ParseOptions po;
  auto train = dataio::load_dataset(data_path, po);
  trainer::TrainConfig cfg = resolve(f);
  std::optional<dataio::TimeSeriesDataset> test;
  if (!test_path.empty()) {
    po.split = dataio::Split::kTest;
    test = dataio::load_dataset(test_path, po);
  }
  dataio::TimeSeriesDataset fit_data = cfg.normalize ? dataio::zscore(train, train) : train;
  fs::create_directories(out);
  trainer::RunReport rep = run_fit(fit_data, cfg, fs::path(out));
  if (test) {
    auto [tr, te] = normalized(train, *test, cfg.normalize);
    const auto method = evalkit::parse_method(method_name);
    const auto result = run_eval(tr, te, method, out, 0);
    rep.metrics["accuracy"] = result.accuracy;
    rep.metrics["eval_seconds"] = result.seconds;
    print_result(result);
    evalkit::append_result(fs::path(out) / "results.csv", train.name, result, cfg.encoder.output_dim, cfg.seed);
  }
  report::write(out, rep);
  std::cout << "trained " << rep.epochs.size() << " epochs (" << trainer::to_string(cfg.mode) << ") in "
            << rep.training_seconds << " s; artifacts in " << out << "\n";
  return kExitOk;
}

struct BenchFlags {
  std::vector<std::size_t> values;
  std::size_t fixed = 0, dims = 3, classes = 2;
  std::string out;
};

int cmd_bench(const std::string& axis, const TrainFlags& f, const BenchFlags& b) {
  trainer::TrainConfig base;
  base.encoder.output_dim = 16;
  base.batch_size = 16;
  base.epochs = 10;
  base.precision = trainer::Precision::kF32;
  base = resolve(f, base);
  std::ostringstream csv;
  csv << "axis,value,mode,epochs,mean_epoch_seconds,total_seconds,ratio\n";
  for (std::size_t v : b.values) {
    const std::size_t length = axis == "length" ? v : b.fixed;
    const std::size_t size = axis == "length" ? b.fixed : v;
    const std::size_t per_class = (size + b.classes - 1) / b.classes;
    auto data = dataio::synth_classification(per_class, b.dims, length, b.classes, base.seed);
    data = dataio::zscore(data, data);
    double hier_mean = 0.0;
    for (auto mode : {trainer::Mode::kHier, trainer::Mode::kIars}) {
      auto cfg = base;
      cfg.mode = mode;
      const auto rep = run_fit(data, cfg, std::nullopt);
      const double mean = rep.mean_epoch_seconds();
      if (mode == trainer::Mode::kHier) hier_mean = mean;
      const double ratio = mode == trainer::Mode::kHier ? 1.0 : mean / hier_mean;
      csv << axis << ',' << v << ',' << trainer::to_string(mode) << ',' << cfg.epochs << ',' << mean << ','
          << rep.training_seconds << ',' << ratio << '\n';
      std::cerr << axis << "=" << v << " " << trainer::to_string(mode) << " mean epoch " << mean << " s\n";
    }
  }
  std::cout << csv.str();
  if (axis == "length") {
    std::cout << "# reference: length 3000, hier 904.13 s, iars 668.43 s, ratio 0.739\n";
  } else {
    std::cout << "# reference: size 1000, hier 2855.02 s, iars 2386.30 s, ratio 0.836\n";
  }
  std::cout << "# threads " << base.threads << ", precision " << trainer::to_string(base.precision) << "\n";
  if (!b.out.empty()) {
    std::ofstream file(b.out);
    if (!file) throw DataError("cannot write " + b.out);
    file << csv.str();
  }
  return kExitOk;
}

int cmd_export(const std::string& checkpoint_path, const std::string& data_path, const std::string& out,
               bool normalize) {
  auto data = dataio::load_dataset(data_path);
  if (normalize) data = dataio::zscore(data, data);
  numerics::Tensor<double> e;
  if (checkpoint::stored_precision(checkpoint_path) == "f32") {
    e = evalkit::embed(data, checkpoint::load<float>(checkpoint_path));
  } else {
    e = evalkit::embed(data, checkpoint::load<double>(checkpoint_path));
  }
  std::ofstream file(out);
  if (!file) throw DataError("cannot write " + out);
  const std::size_t k = e.dim(1);
  file << "label";
  for (std::size_t j = 0; j < k; ++j) file << ",e" << j;
  file << '\n';
  file.precision(17);
  for (std::size_t i = 0; i < e.dim(0); ++i) {
    file << (data.has_labels() ? data.class_names[static_cast<std::size_t>(data.labels[i])] : "");
    for (std::size_t j = 0; j < k; ++j) file << ',' << e[i * k + j];
    file << '\n';
  }
  std::cout << "wrote " << e.dim(0) << " embeddings of width " << k << " to " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive time-series representation learning with importance-aware resolution selection"};
  app.require_subcommand(1);

  TrainFlags train_flags;
  std::string data, test_data, out, method = "embed-1nn";
  auto* train = app.add_subcommand("train", "Train an encoder and write checkpoint + report");
  add_train_flags(*train, train_flags);
  train->add_option("--data", data, "Training split (.ts/.tsv/.csv/.txt)")->required();
  train->add_option("--test-data", test_data, "Optional test split; evaluates after training");
  train->add_option("--out", out, "Output directory")->required();
  train->add_option("--method", method, "Evaluation method when --test-data is given");

  std::string checkpoint, results;
  std::size_t window = 0;
  std::uint64_t eval_seed = 0;
  std::size_t eval_k = 0;
  bool no_normalize = false;
  auto* eval = app.add_subcommand("eval", "Evaluate a classifier on a train/test pair");
  eval->add_option("--checkpoint", checkpoint, "Checkpoint directory (embedding methods only)");
  eval->add_option("--data", data, "Train split")->required();
  eval->add_option("--test-data", test_data, "Test split")->required();
  eval->add_option("--method", method, "embed-1nn, embed-linear, 1nn-ed, 1nn-dtw-d or 1nn-dtw-i");
  eval->add_option("--out", results, "Results CSV to append to");
  eval->add_option("--window", window, "Sakoe-Chiba band for DTW (0 = none)");
  eval->add_option("--seed", eval_seed, "Seed recorded with the result");
  eval->add_option("--k", eval_k, "K recorded with the result (defaults to the checkpoint's)");
  eval->add_flag("--no-normalize", no_normalize, "Skip z-scoring with train statistics");

  TrainFlags bench_train;
  BenchFlags bench_len{{256, 1024}, 64};
  auto* blen = app.add_subcommand("bench-length", "Time both modes across series lengths");
  add_train_flags(*blen, bench_train);
  blen->add_option("--lengths", bench_len.values, "Series lengths")->delimiter(',');
  blen->add_option("--n", bench_len.fixed, "Instances per dataset");
  blen->add_option("--dims", bench_len.dims, "Channels");
  blen->add_option("--out", bench_len.out, "CSV output path");

  TrainFlags bench_size_train;
  BenchFlags bench_size{{64, 128}, 256};
  auto* bsize = app.add_subcommand("bench-size", "Time both modes across dataset sizes");
  add_train_flags(*bsize, bench_size_train);
  bsize->add_option("--sizes", bench_size.values, "Instance counts")->delimiter(',');
  bsize->add_option("--length", bench_size.fixed, "Series length");
  bsize->add_option("--dims", bench_size.dims, "Channels");
  bsize->add_option("--out", bench_size.out, "CSV output path");

  std::string export_out;
  auto* exp = app.add_subcommand("export-embeddings", "Write N x K embeddings with labels as CSV");
  exp->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  exp->add_option("--data", data, "Dataset")->required();
  exp->add_option("--out", export_out, "CSV path")->required();
  exp->add_flag("--no-normalize", no_normalize, "Skip z-scoring");

  std::size_t per_class = 20, classes = 3, dims = 1, length = 256;
  std::uint64_t synth_seed = 0;
  double noise = 0.3;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Write a synthetic sinusoid classification set as .ts");
  synth->add_option("--out", synth_out, ".ts path")->required();
  synth->add_option("--per-class", per_class, "Instances per class");
  synth->add_option("--classes", classes, "Classes");
  synth->add_option("--dims", dims, "Channels");
  synth->add_option("--length", length, "Series length");
  synth->add_option("--seed", synth_seed, "Seed");
  synth->add_option("--noise", noise, "Gaussian noise sigma");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_flags, data, test_data, out, method);
    if (*eval) {
      const auto m = evalkit::parse_method(method);
      dataio::ParseOptions po;
      auto tr = dataio::load_dataset(data, po);
      po.split = dataio::Split::kTest;
      auto te = dataio::load_dataset(test_data, po);
      auto [trn, ten] = normalized(std::move(tr), std::move(te), !no_normalize);
      const auto r = run_eval(trn, ten, m, checkpoint, window);
      print_result(r);
      if (!results.empty()) {
        std::size_t k = eval_k;
        if (k == 0 && !checkpoint.empty() && evalkit::needs_encoder(m)) {
          k = checkpoint::load<double>(checkpoint).config.output_dim;
        }
        evalkit::append_result(results, trn.name, r, k, eval_seed);
      }
      return kExitOk;
    }
    if (*blen) return cmd_bench("length", bench_train, bench_len);
    if (*bsize) return cmd_bench("size", bench_size_train, bench_size);
    if (*exp) return cmd_export(checkpoint, data, export_out, !no_normalize);
    if (*synth) {
      auto ds = dataio::synth_classification(per_class, dims, length, classes, synth_seed, noise);
      dataio::save_ts(synth_out, ds);
      std::cout << "wrote " << ds.size() << " series to " << synth_out << "\n";
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
