#include "noie/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "noie/beam.hpp"
#include "noie/checkpoint.hpp"
#include "noie/eval.hpp"
#include "noie/model.hpp"
#include "noie/train.hpp"
#include "noie/tuples.hpp"
#include "noie/vocab.hpp"

namespace noie {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitRuntime = 3;

struct GenArgs {
  std::size_t n = 200;
  std::uint64_t seed = 1;
  std::string out;
};

struct BootstrapArgs {
  std::string in, out;
  double min_conf = 0.9;
  std::size_t max_len = 40;
  bool strict = false;
};

struct TrainArgs {
  std::string data, val, out;
  ModelConfig model;
  TrainConfig train;
  std::size_t vocab_size = 50010;  // 50k words + the 10 reserved ids
  bool desk = false;
};

struct ExtractArgs {
  std::string model, in, out;
  BeamConfig beam;
  int threads = 1;
};

struct EvalArgs {
  std::string gold;
  std::vector<std::string> preds;
  std::vector<std::string> labels;
  std::string out = ".";
  MatchConfig match;
};

int cmd_gen(const GenArgs& a) {
  Rng rng(a.seed);
  auto pairs = gen_synthetic(a.n, rng);
  save_pairs(a.out, pairs);
  std::cout << "wrote " << pairs.size() << " pairs to " << a.out << "\n";
  return kExitOk;
}

int cmd_bootstrap(const BootstrapArgs& a) {
  LoadStats stats;
  auto pairs = load_pairs(a.in, a.strict, &stats);
  std::ofstream out(a.out, std::ios::binary);
  if (!out) throw DataError("cannot write " + a.out);

  std::size_t kept = 0;
  std::map<std::string, std::size_t> dropped;
  for (const auto& p : pairs) {
    std::string why;
    if (!filter_pair(p, a.max_len, a.min_conf, &why)) {
      ++dropped[why];
      continue;
    }
    out << join_tokens(p.sentence) << '\t' << join_tokens(encode_tuple(p)) << '\n';
    ++kept;
  }
  if (!out) throw DataError("write failed: " + a.out);

  std::cout << "read " << stats.lines << " lines, " << stats.kept << " parsed";
  if (stats.skipped) std::cout << ", " << stats.skipped << " malformed skipped";
  std::cout << "\nkept " << kept << " pairs after filtering\n";
  for (const auto& [why, n] : dropped) std::cout << "  dropped " << n << ": " << why << "\n";
  return kExitOk;
}

std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>>
load_tagged_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<std::pair<std::vector<std::string>, std::vector<std::string>>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw DataError(path + ": line " + std::to_string(lineno) +
                      ": expected source<TAB>target");
    auto src = tokenize(line.substr(0, tab));
    auto tgt = tokenize(line.substr(tab + 1));
    if (src.empty() || tgt.empty())
      throw DataError(path + ": line " + std::to_string(lineno) + ": empty field");
    out.emplace_back(std::move(src), std::move(tgt));
  }
  return out;
}

template <class S>
int run_train(const TrainArgs& a) {
  auto raw = load_tagged_pairs(a.data);
  if (raw.empty()) throw DataError(a.data + ": no training pairs");

  std::map<std::string, long long> counts;
  for (const auto& [src, tgt] : raw) {
    for (const auto& t : src) ++counts[t];
    for (const auto& t : tgt) ++counts[t];
  }
  Vocabulary vocab = Vocabulary::build(counts, a.vocab_size);

  ModelConfig mcfg = a.model;
  mcfg.vocab_size = static_cast<int>(vocab.size());
  mcfg.dropout = a.train.dropout;
  mcfg.validate();

  std::vector<EncodedPair> train_set;
  std::size_t skipped_long = 0;
  for (const auto& [src, tgt] : raw) {
    if (static_cast<int>(src.size()) > mcfg.max_source_len) {
      ++skipped_long;
      continue;
    }
    train_set.push_back(encode_pair(src, tgt, vocab));
  }
  if (skipped_long)
    std::cout << "skipped " << skipped_long << " pairs over " << mcfg.max_source_len
              << " source tokens\n";

  std::vector<EncodedPair> val_set;
  if (!a.val.empty()) {
    for (const auto& [src, tgt] : load_tagged_pairs(a.val)) {
      if (static_cast<int>(src.size()) > mcfg.max_source_len) continue;
      val_set.push_back(encode_pair(src, tgt, vocab));
    }
  }

  Rng init_rng(a.train.seed);
  ModelParams<S> params(mcfg);
  params.init_uniform(init_rng, 0.1);

  std::cout << "training on " << train_set.size() << " pairs, vocab " << vocab.size()
            << ", hidden " << mcfg.hidden_dim << ", layers " << mcfg.num_layers << ", "
            << (sizeof(S) * 8) << "-bit\n";
  TrainResult res = train(params, train_set, val_set, a.train, vocab, a.out, &std::cout);
  std::cout << "best epoch " << res.best_epoch << "; checkpoints in " << a.out << "\n";
  return kExitOk;
}

template <class S>
int run_extract(const ExtractArgs& a) {
  Vocabulary vocab;
  ModelParams<S> params = load_checkpoint<S>(a.model, &vocab);
  ExtractStats stats =
      extract_corpus<S>(params, vocab, a.in, a.out, a.beam, a.threads);
  char rate[64];
  std::snprintf(rate, sizeof(rate), "%.2f", stats.seconds > 0
                                                ? double(stats.sentences) / stats.seconds
                                                : 0.0);
  std::cout << "extracted from " << stats.sentences << " sentences in " << stats.seconds
            << "s (" << rate << " sentences/sec), malformed rate "
            << stats.malformed_rate() << "\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& a) {
  auto golds = load_gold(a.gold);
  if (golds.empty()) throw DataError(a.gold + ": no gold extractions");

  std::vector<Report> reports;
  for (std::size_t i = 0; i < a.preds.size(); ++i) {
    auto preds = load_predictions(a.preds[i]);
    Report rep;
    if (i < a.labels.size()) {
      rep.label = a.labels[i];
    } else {
      auto stem = std::filesystem::path(a.preds[i]).stem().string();
      rep.label = stem.empty() ? ("system" + std::to_string(i + 1)) : stem;
    }
    auto assignment = score_corpus(preds, golds, a.match);
    rep.points = pr_curve(assignment);
    rep.auc = auc(rep.points);
    reports.push_back(std::move(rep));
  }
  auto files = emit_report(reports, a.out);
  for (const auto& rep : reports) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", rep.auc);
    std::cout << rep.label << " AUC=" << buf << "\n";
  }
  std::cout << "wrote " << files.size() << " report files to " << a.out << "\n";
  return kExitOk;
}

void apply_desk_preset(CLI::App* train_cmd, TrainArgs& t) {
  // Desk-scale defaults for flags the user did not set explicitly. The
  // corpus is a few hundred pairs, so one partition, pure SGD and a late
  // decay get the model memorizing within 30 epochs on a single CPU.
  auto defaulted = [&](const std::string& flag) {
    return train_cmd->get_option(flag)->count() == 0;
  };
  if (defaulted("--hidden")) t.model.hidden_dim = 64;
  if (defaulted("--embed")) t.model.embed_dim = 64;
  if (defaulted("--layers")) t.model.num_layers = 1;
  if (defaulted("--epochs")) t.train.epochs = 30;
  if (defaulted("--dropout")) t.train.dropout = 0.0;
  if (defaulted("--partitions")) t.train.partitions = 1;
  if (defaulted("--batch")) t.train.batch_size = 1;
  if (defaulted("--decay-start")) t.train.decay_start_epoch = 26;
}

}  // namespace

int run_cli(std::vector<std::string> args) {
  CLI::App app{"neural Open IE: bootstrap, train, extract and evaluate"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic training-pair TSV");
  gen_cmd->add_option("--n", gen.n, "number of pairs")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "random seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "output pairs TSV")->required();

  BootstrapArgs boot;
  auto* boot_cmd =
      app.add_subcommand("bootstrap", "filter raw pairs and emit tagged training data");
  boot_cmd->add_option("--in", boot.in, "input pairs TSV")->required();
  boot_cmd->add_option("--out", boot.out, "output tagged-pair TSV")->required();
  boot_cmd->add_option("--min-conf", boot.min_conf, "minimum tuple confidence")
      ->capture_default_str();
  boot_cmd->add_option("--max-len", boot.max_len, "maximum sentence length in words")
      ->capture_default_str();
  boot_cmd->add_flag("--strict", boot.strict, "abort on the first malformed line");

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "train a model on tagged pairs");
  train_cmd->add_option("--data", tr.data, "tagged-pair TSV")->required();
  train_cmd->add_option("--val", tr.val, "validation tagged-pair TSV");
  train_cmd->add_option("--out", tr.out, "checkpoint/history output directory")
      ->required();
  train_cmd->add_option("--hidden", tr.model.hidden_dim, "LSTM hidden dimension")
      ->capture_default_str();
  train_cmd->add_option("--embed", tr.model.embed_dim, "word embedding dimension")
      ->capture_default_str();
  train_cmd->add_option("--layers", tr.model.num_layers, "encoder/decoder LSTM layers")
      ->capture_default_str();
  train_cmd->add_option("--vocab-size", tr.vocab_size, "maximum vocabulary size")
      ->capture_default_str();
  train_cmd->add_option("--epochs", tr.train.epochs, "training epochs")
      ->capture_default_str();
  train_cmd->add_option("--lr", tr.train.lr0, "initial learning rate")
      ->capture_default_str();
  train_cmd->add_option("--decay", tr.train.decay, "learning rate decay factor")
      ->capture_default_str();
  train_cmd
      ->add_option("--decay-start", tr.train.decay_start_epoch,
                   "first epoch with decayed learning rate")
      ->capture_default_str();
  train_cmd->add_option("--dropout", tr.train.dropout, "dropout rate")
      ->capture_default_str();
  train_cmd->add_option("--partitions", tr.train.partitions, "data partitions")
      ->capture_default_str();
  train_cmd->add_option("--batch", tr.train.batch_size, "batch size")
      ->capture_default_str();
  train_cmd->add_option("--seed", tr.train.seed, "random seed")->capture_default_str();
  train_cmd
      ->add_option("--clip", tr.train.grad_clip_norm, "gradient clipping global norm")
      ->capture_default_str();
  train_cmd->add_option("--precision", tr.train.precision, "float precision (32 or 64)")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();
  train_cmd->add_flag("--desk", tr.desk,
                      "desk-scale preset: hidden 64, embed 64, 1 layer, 30 epochs, "
                      "no dropout, 1 partition, batch 8");

  ExtractArgs ex;
  auto* ex_cmd = app.add_subcommand("extract", "extract tuples from sentences");
  ex_cmd->add_option("--model", ex.model, "checkpoint file")->required();
  ex_cmd->add_option("--in", ex.in, "input sentence_id<TAB>sentence TSV")->required();
  ex_cmd->add_option("--out", ex.out, "output prediction TSV")->required();
  ex_cmd->add_option("--beam", ex.beam.beam_width, "beam width")->capture_default_str();
  ex_cmd->add_option("--topk", ex.beam.top_k, "tuples kept per sentence")
      ->capture_default_str();
  ex_cmd->add_option("--max-len", ex.beam.max_decode_len, "maximum decoded length")
      ->capture_default_str();
  ex_cmd->add_option("--threads", ex.threads, "worker threads")->capture_default_str();

  EvalArgs ev;
  auto* ev_cmd = app.add_subcommand("eval", "score predictions against gold tuples");
  ev_cmd->add_option("--gold", ev.gold, "gold TSV")->required();
  ev_cmd->add_option("--pred", ev.preds, "prediction TSV (repeatable)")->required();
  ev_cmd->add_option("--label", ev.labels, "system label per --pred");
  ev_cmd->add_option("--out", ev.out, "report output directory")->capture_default_str();
  ev_cmd->add_option("--threshold", ev.match.threshold, "per-slot match threshold")
      ->capture_default_str();
  ev_cmd->add_flag("--case-sensitive", ev.match.case_sensitive,
                   "match tokens case-sensitively");

  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen(gen);
    if (boot_cmd->parsed()) return cmd_bootstrap(boot);
    if (train_cmd->parsed()) {
      if (tr.desk) apply_desk_preset(train_cmd, tr);
      tr.train.validate();
      return tr.train.precision == 32 ? run_train<float>(tr) : run_train<double>(tr);
    }
    if (ex_cmd->parsed()) {
      ex.beam.validate();
      const int precision = peek_checkpoint(ex.model).precision;
      return precision == 32 ? run_extract<float>(ex) : run_extract<double>(ex);
    }
    if (ev_cmd->parsed()) return cmd_eval(ev);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace noie
