// Command-line front end: training, evaluation, sampling, oracle and KDE
// utilities, probing and hyperparameter sweeps.

#include <array>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "lvae/checkpoint.hpp"
#include "lvae/config.hpp"
#include "lvae/corpus.hpp"
#include "lvae/errors.hpp"
#include "lvae/evaluation.hpp"
#include "lvae/kde_bounds.hpp"
#include "lvae/oc_oracle.hpp"
#include "lvae/training.hpp"

using namespace lvae;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(10) << v;
  return os.str();
}

void write_or_print(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-")
    std::cout << text;
  else
    write_file_atomic(path, text);
}

// The corpus is encoded with the checkpoint's vocabulary when asked to;
// otherwise its own vocabulary must match the checkpoint's exactly.
std::vector<TokenSequence> corpus_for(const Checkpoint& ckpt, const std::string& path, bool reuse_vocab,
                                      int min_count) {
  if (reuse_vocab) return encode_corpus_file(path, ckpt.vocab);
  Corpus c = load_corpus(path, std::nullopt, min_count);
  require_same_vocabulary(ckpt.vocab, c.vocab);
  return std::move(c.sequences);
}

int max_length(const std::vector<TokenSequence>& data) {
  std::size_t n = 0;
  for (const auto& x : data) n = std::max(n, x.size());
  return static_cast<int>(n);
}

std::vector<std::array<double, 2>> read_points(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<std::array<double, 2>> points;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    for (char& c : line)
      if (c == ',') c = ' ';
    std::istringstream is(line);
    std::array<double, 2> p{};
    if (!(is >> p[0] >> p[1])) {
      if (points.empty() && line_no == 1) continue;  // header
      throw Error(ErrorCode::IoError, path + ":" + std::to_string(line_no) + ": expected x,y");
    }
    points.push_back(p);
  }
  if (points.empty()) throw Error(ErrorCode::EmptyCorpus, "no points in '" + path + "'");
  return points;
}

std::vector<PairRecord> load_pairs(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");
  std::vector<PairRecord> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream is(line);
    PairRecord p;
    if (!(is >> p.a >> p.b >> p.label) || p.a >= n || p.b >= n || p.label < 0)
      throw Error(ErrorCode::MalformedLabel, path + ":" + std::to_string(line_no) + ": expected a<TAB>b<TAB>label");
    pairs.push_back(p);
  }
  return pairs;
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    double f = 0.0;
    try {
      f = std::stod(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used == 0 || !(f > 0.0 && f <= 1.0))
      throw Error(ErrorCode::ConfigInvalid, "fractions must be in (0, 1], got '" + item + "'");
    out.push_back(f);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Levenshtein VAE: training, evaluation and oracle tools"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model on a corpus");
  std::string cfg_path, corpus_path, labels_path, out_path, metrics_path;
  int min_count = 1;
  bool deterministic = false, quiet = false;
  train_cmd->add_option("--config", cfg_path, "TrainConfig JSON")->required();
  train_cmd->add_option("--corpus", corpus_path, "one sentence per line")->required();
  train_cmd->add_option("--labels", labels_path, "line_index<TAB>label");
  train_cmd->add_option("--out", out_path, "checkpoint path")->required();
  train_cmd->add_option("--metrics", metrics_path, "metrics CSV (default <out>.metrics.csv)");
  train_cmd->add_option("--min-count", min_count, "vocabulary frequency threshold");
  train_cmd->add_flag("--deterministic", deterministic, "write 0 in the seconds column");
  train_cmd->add_flag("--quiet", quiet, "no per-epoch progress");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, report_path;
  std::size_t is_samples = 1000;
  std::uint64_t seed = 1;
  bool reuse_vocab = false;
  eval_cmd->add_option("--ckpt", ckpt_path)->required();
  eval_cmd->add_option("--corpus", corpus_path)->required();
  eval_cmd->add_option("--report", report_path, "CSV output ('-' for stdout)")->required();
  eval_cmd->add_option("--is-samples", is_samples, "importance samples per sequence (0 skips)");
  eval_cmd->add_option("--seed", seed);
  eval_cmd->add_option("--min-count", min_count);
  eval_cmd->add_flag("--checkpoint-vocab", reuse_vocab, "encode the corpus with the checkpoint's vocabulary");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "decode sentences from the prior");
  bool greedy = false;
  int n_samples = 10, length_cap = 50;
  sample_cmd->add_option("--ckpt", ckpt_path)->required();
  sample_cmd->add_flag("--greedy", greedy);
  sample_cmd->add_option("--n", n_samples)->check(CLI::PositiveNumber);
  sample_cmd->add_option("--seed", seed);
  sample_cmd->add_option("--max-len", length_cap)->check(CLI::PositiveNumber);

  // oracle
  auto* oracle_cmd = app.add_subcommand("oracle", "optimal next-token sets for a generated prefix");
  std::string target, generated;
  oracle_cmd->add_option("--target", target)->required();
  oracle_cmd->add_option("--generated", generated)->required();

  // kde
  auto* kde_cmd = app.add_subcommand("kde", "KDE partition functions and normalization");
  double tau = 0.5, tolerance = 1e-6;
  int lmax = 12, eval_length = -1;
  kde_cmd->add_option("--corpus", corpus_path)->required();
  kde_cmd->add_option("--tau", tau)->required();
  kde_cmd->add_option("--lmax", lmax);
  kde_cmd->add_option("--tolerance", tolerance, "largest acceptable tail bound");
  kde_cmd->add_option("--eval-length", eval_length, "length for the normalization sum (default lmax)");

  // bound-demo
  auto* demo_cmd = app.add_subcommand("bound-demo", "reward fields of the 2-D kernel illustration");
  std::string points_path, grid_out;
  int grid = 200;
  demo_cmd->add_option("--points", points_path, "CSV of x,y")->required();
  demo_cmd->add_option("--tau", tau)->required();
  demo_cmd->add_option("--grid", grid)->check(CLI::PositiveNumber);
  demo_cmd->add_option("--out", grid_out, "CSV output (default stdout)");

  // probe
  auto* probe_cmd = app.add_subcommand("probe", "linear probe on posterior means");
  bool paired = false;
  std::string fractions_text = "0.01,0.1,0.5,1.0";
  int repeats = 5;
  probe_cmd->add_option("--ckpt", ckpt_path)->required();
  probe_cmd->add_option("--corpus", corpus_path)->required();
  probe_cmd->add_option("--labels", labels_path, "labels TSV, or a<TAB>b<TAB>label with --paired")->required();
  probe_cmd->add_flag("--paired", paired);
  probe_cmd->add_option("--fractions", fractions_text);
  probe_cmd->add_option("--repeats", repeats)->check(CLI::PositiveNumber);
  probe_cmd->add_option("--seed", seed);
  probe_cmd->add_option("--min-count", min_count);
  probe_cmd->add_flag("--checkpoint-vocab", reuse_vocab);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "random hyperparameter search");
  std::string space_path, objective = "lev_d";
  std::size_t budget = 8;
  sweep_cmd->add_option("--space", space_path)->required();
  sweep_cmd->add_option("--budget", budget)->required();
  sweep_cmd->add_option("--corpus", corpus_path)->required();
  sweep_cmd->add_option("--objective", objective, "lev_d, neg_elbo or total");
  sweep_cmd->add_option("--seed", seed);
  sweep_cmd->add_option("--min-count", min_count);

  // synth
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic latent-class corpus");
  std::string spec_path, pairs_path;
  synth_cmd->add_option("--spec", spec_path, "SyntheticSpec JSON (defaults if omitted)");
  synth_cmd->add_option("--out", out_path)->required();
  synth_cmd->add_option("--labels", labels_path);
  synth_cmd->add_option("--pairs", pairs_path, "a<TAB>b<TAB>relation");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*train_cmd) {
      const TrainConfig cfg = load_train_config(cfg_path);
      const Corpus corpus =
          load_corpus(corpus_path, labels_path.empty() ? std::nullopt : std::optional(labels_path), min_count);
      TrainCallbacks cb;
      if (!quiet)
        cb.on_epoch = [](const EpochMetrics& m) {
          std::cerr << "epoch " << m.epoch << " total " << fmt(m.total) << " kl " << fmt(m.kl) << " lev_d "
                    << fmt(m.lev_d) << '\n';
        };
      const TrainResult r = train(cfg, corpus, cb);
      save_checkpoint(r.checkpoint, out_path);
      write_file_atomic(metrics_path.empty() ? out_path + ".metrics.csv" : metrics_path,
                        metrics_csv(r.metrics, !deterministic));
    } else if (*eval_cmd) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const auto data = corpus_for(ckpt, corpus_path, reuse_vocab, min_count);
      EvalOptions opts;
      opts.is_samples = is_samples;
      opts.seed = seed;
      opts.length_cap = 2 * max_length(data) + 2;
      const EvalReport r = evaluate(ckpt.model, data, opts);
      std::ostringstream os;
      os << "metric,value\n"
         << "lev_d," << fmt(r.lev_d) << "\nlev_raw," << fmt(r.lev_raw) << "\nrecon_nll,"
         << fmt(r.recon_nll) << "\nkl," << fmt(r.kl) << "\nneg_elbo," << fmt(r.neg_elbo) << '\n';
      if (r.has_is)
        os << "nll_is," << fmt(r.nll_is) << "\nnll_is_std_error," << fmt(r.nll_is_std_error) << "\nppl,"
           << fmt(r.ppl) << '\n';
      os << "sequences," << r.sequences << "\ntokens," << r.tokens << "\n\nposition,accuracy,count,aligned\n";
      for (const auto& p : positionwise_accuracy(data, reconstruct(ckpt.model, data, opts.length_cap)))
        os << p.position << ',' << fmt(p.accuracy) << ',' << p.count << ',' << fmt(p.aligned) << '\n';
      write_or_print(report_path, os.str());
    } else if (*sample_cmd) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      Rng rng(seed);
      const auto dz = static_cast<std::size_t>(ckpt.model.dims().d_z);
      for (int i = 0; i < n_samples; ++i) {
        const auto z = ckpt.model.dims().use_encoder ? rng.normals(dz) : std::vector<double>(dz, 0.0);
        const auto d = decode(ckpt.model, z, greedy ? DecodeMode::Greedy : DecodeMode::Sample, &rng, length_cap);
        std::cout << ckpt.vocab.decode(d.tokens) << '\n';
      }
    } else if (*oracle_cmd) {
      const auto t = split_whitespace(target);
      if (t.empty()) throw Error(ErrorCode::EmptyReference, "target is empty");
      std::cout << format_oracle_table(t, split_whitespace(generated));
    } else if (*kde_cmd) {
      const Corpus corpus = load_corpus(corpus_path);
      KdeConfig cfg;
      cfg.tau = tau;
      cfg.dataset = corpus.sequences;
      cfg.content_size = corpus.vocab.content_size();
      cfg.l_max = lmax;
      cfg.tail_tolerance = tolerance;
      const auto parts = partition_functions(cfg);
      std::cout << "index,length,z,tail_bound\n";
      for (std::size_t k = 0; k < parts.size(); ++k)
        std::cout << k << ',' << corpus.sequences[k].size() << ',' << fmt(parts[k].z) << ','
                  << fmt(parts[k].tail_bound) << '\n';
      const auto norm = kde_normalization(cfg, parts, eval_length < 0 ? lmax : eval_length);
      std::cout << "\nmass,tail,sequences\n"
                << fmt(norm.mass) << ',' << fmt(norm.tail) << ',' << norm.sequences << '\n';
    } else if (*demo_cmd) {
      const auto points = read_points(points_path);
      GridSpec spec;
      spec.resolution = grid;
      double lo_x = points[0][0], hi_x = lo_x, lo_y = points[0][1], hi_y = lo_y;
      for (const auto& p : points) {
        lo_x = std::min(lo_x, p[0]);
        hi_x = std::max(hi_x, p[0]);
        lo_y = std::min(lo_y, p[1]);
        hi_y = std::max(hi_y, p[1]);
      }
      const double pad_x = std::max(0.5, 0.25 * (hi_x - lo_x)), pad_y = std::max(0.5, 0.25 * (hi_y - lo_y));
      spec.x_min = lo_x - pad_x;
      spec.x_max = hi_x + pad_x;
      spec.y_min = lo_y - pad_y;
      spec.y_max = hi_y + pad_y;
      const auto g = reward_grid_demo(points, tau, spec);
      std::ostringstream os;
      os << "x,y,kde_reward,naive_reward\n";
      for (const auto& c : g.cells)
        os << fmt(c.x) << ',' << fmt(c.y) << ',' << fmt(c.field_a) << ',' << fmt(c.field_b) << '\n';
      write_or_print(grid_out, os.str());
    } else if (*probe_cmd) {
      const Checkpoint ckpt = load_checkpoint(ckpt_path);
      const auto data = corpus_for(ckpt, corpus_path, reuse_vocab, min_count);
      const auto mu = single_features(ckpt.model, data);
      FeatureRows train_rows, test_rows;
      std::vector<int> train_y, test_y;
      if (paired) {
        for (const auto& p : load_pairs(labels_path, data.size())) {
          const bool test = in_validation_split(data[p.a]);
          (test ? test_rows : train_rows).push_back(paired_features(mu[p.a], mu[p.b]));
          (test ? test_y : train_y).push_back(p.label);
        }
      } else {
        const auto labels = load_labels(labels_path, data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
          const bool test = in_validation_split(data[i]);
          (test ? test_rows : train_rows).push_back(mu[i]);
          (test ? test_y : train_y).push_back(labels[i]);
        }
      }
      if (test_rows.empty() || train_rows.empty())
        throw Error(ErrorCode::DegenerateLabels, "hash split left no training or no test examples");
      const auto curve = semi_supervised_curve(train_rows, train_y, test_rows, test_y,
                                               parse_fractions(fractions_text), {}, repeats, seed);
      std::cout << "fraction,labeled,accuracy\n";
      for (const auto& c : curve) std::cout << fmt(c.fraction) << ',' << c.labeled << ',' << fmt(c.accuracy) << '\n';
    } else if (*sweep_cmd) {
      const SearchSpace space = load_search_space(space_path);
      const Corpus corpus = load_corpus(corpus_path, std::nullopt, min_count);
      const auto results = random_search(space, budget, objective, corpus, seed);
      std::cout << "rank,score,config\n";
      for (std::size_t i = 0; i < results.size(); ++i)
        std::cout << i + 1 << ',' << fmt(results[i].score) << ",\"" << [&] {
          std::string j = train_config_to_json(results[i].config, -1);
          std::string quoted;
          for (char c : j) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
          return quoted;
        }() << "\"\n";
    } else if (*synth_cmd) {
      const SyntheticSpec spec = spec_path.empty() ? SyntheticSpec{} : synthetic_spec_from_json(read_text_file(spec_path));
      const auto sc = generate_synthetic_corpus(spec);
      write_corpus(sc.corpus, out_path, labels_path.empty() ? std::nullopt : std::optional(labels_path));
      if (!pairs_path.empty()) {
        std::ostringstream os;
        for (const auto& p : sc.corpus.pairs) os << p.a << '\t' << p.b << '\t' << p.label << '\n';
        write_file_atomic(pairs_path, os.str());
      }
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
