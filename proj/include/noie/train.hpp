#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "noie/checkpoint.hpp"
#include "noie/model.hpp"
#include "noie/train_config.hpp"
#include "noie/tuples.hpp"
#include "noie/vocab.hpp"

namespace noie {

// A training pair after vocabulary lookup: encoded source plus the
// BOS ... EOS framed extended-id target.
struct EncodedPair {
  SourceEncoding src;
  std::vector<int> target;
};

inline EncodedPair encode_pair(const std::vector<std::string>& source_tokens,
                               const std::vector<std::string>& target_tokens,
                               const Vocabulary& vocab) {
  EncodedPair ep;
  ep.src = SourceEncoding::from_tokens(source_tokens, vocab);
  ep.target.push_back(Vocabulary::kBos);
  for (int id : ep.src.target_ext_ids(target_tokens, vocab)) ep.target.push_back(id);
  ep.target.push_back(Vocabulary::kEos);
  return ep;
}

inline std::size_t target_token_count(const EncodedPair& p) {
  return p.target.size() - 1;  // predicted positions, BOS is input-only
}

// Mean NLL per target token over the batch, dropout active when
// `drop_rng` is given. Gradients accumulate scaled by 1/token_count.
template <class S>
double compute_loss(ModelParams<S>& params, const std::vector<const EncodedPair*>& batch,
                    Rng* drop_rng, std::size_t* token_count_out = nullptr) {
  if (batch.empty()) throw DataError("compute_loss: empty batch");
  std::size_t tokens = 0;
  for (const auto* p : batch) tokens += target_token_count(*p);
  const S scale = S(1) / static_cast<S>(tokens);
  double nll_sum = 0;
  for (const auto* p : batch)
    nll_sum += pair_nll_backward(params, p->src, p->target, scale, drop_rng);
  if (token_count_out) *token_count_out = tokens;
  return nll_sum / double(tokens);
}

// Shard-per-epoch sampling: the dataset is split into `partitions` nearly
// equal shards (assignment fixed by the seed), epoch e trains on shard
// (e-1) mod partitions, shuffled with a per-epoch substream.
inline std::vector<std::size_t> partition_and_sample(std::size_t dataset_size,
                                                     int partitions, int epoch,
                                                     std::uint64_t seed) {
  if (partitions < 1) throw DataError("partition_and_sample: partitions must be >= 1");
  if (epoch < 1) throw DataError("partition_and_sample: epoch must be >= 1");
  if (dataset_size < static_cast<std::size_t>(partitions))
    throw DataError("partition_and_sample: dataset has " +
                    std::to_string(dataset_size) + " pairs, fewer than " +
                    std::to_string(partitions) + " partitions");

  std::vector<std::size_t> order(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) order[i] = i;
  Rng assign(mix_seed(seed, 0xA55A));
  assign.shuffle(order);

  const std::size_t p = static_cast<std::size_t>(partitions);
  const std::size_t shard = static_cast<std::size_t>((epoch - 1) % partitions);
  const std::size_t base = dataset_size / p, extra = dataset_size % p;
  // first `extra` shards hold one more element
  std::size_t begin = shard * base + std::min(shard, extra);
  std::size_t len = base + (shard < extra ? 1 : 0);

  std::vector<std::size_t> out(order.begin() + static_cast<std::ptrdiff_t>(begin),
                               order.begin() + static_cast<std::ptrdiff_t>(begin + len));
  Rng epoch_rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  epoch_rng.shuffle(out);
  return out;
}

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double val_ppl = 0.0;  // NaN when no validation set
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
};

inline void save_history_csv(const std::string& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "epoch,loss,val_ppl,lr,seconds\n";
  char buf[160];
  for (const auto& e : history.epochs) {
    std::snprintf(buf, sizeof(buf), "%d,%.6f,%.6f,%.8g,%.3f\n", e.epoch, e.loss,
                  e.val_ppl, e.lr, e.seconds);
    out << buf;
  }
}

template <class S>
double validation_perplexity(const ModelParams<S>& params,
                             const std::vector<EncodedPair>& val_set) {
  double nll = 0;
  std::size_t tokens = 0;
  for (const auto& p : val_set) {
    nll -= sequence_logprob(params, p.src, p.target);
    tokens += target_token_count(p);
  }
  return std::exp(nll / double(tokens));
}

struct TrainResult {
  TrainHistory history;
  int best_epoch = 0;
};

// SGD with the decayed schedule, global-norm clipping and per-epoch
// checkpoints. `out_dir` empty suppresses all file output. Aborts with
// DivergenceError on a NaN/Inf batch loss; checkpoints already written
// stay on disk.
template <class S>
TrainResult train(ModelParams<S>& params, const std::vector<EncodedPair>& train_set,
                  const std::vector<EncodedPair>& val_set, const TrainConfig& tcfg,
                  const Vocabulary& vocab, const std::string& out_dir,
                  std::ostream* log = nullptr) {
  tcfg.validate();
  if (train_set.empty()) throw DataError("train: empty dataset");
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  Rng drop_rng(mix_seed(tcfg.seed, 0xD407));
  TrainResult result;
  double best_metric = std::numeric_limits<double>::infinity();
  char path_buf[64];

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = lr_schedule(epoch, tcfg);
    auto order = partition_and_sample(train_set.size(), tcfg.partitions, epoch, tcfg.seed);

    double nll_sum = 0;
    std::size_t token_sum = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(tcfg.batch_size)) {
      std::vector<const EncodedPair*> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + static_cast<std::size_t>(tcfg.batch_size));
           ++i)
        batch.push_back(&train_set[order[i]]);

      std::size_t tokens = 0;
      double loss = compute_loss(params, batch, &drop_rng, &tokens);
      if (!std::isfinite(loss))
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) +
                              " (loss is not finite); last saved checkpoint is epoch " +
                              std::to_string(epoch - 1));
      nll_sum += loss * double(tokens);
      token_sum += tokens;

      const double norm = params.grad_norm();
      if (norm > tcfg.grad_clip_norm) params.scale_grads(tcfg.grad_clip_norm / norm);
      params.sgd_step(lr);
      params.zero_grad();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = nll_sum / double(token_sum);
    rec.lr = lr;
    rec.val_ppl = val_set.empty() ? std::nan("") : validation_perplexity(params, val_set);
    rec.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.epochs.push_back(rec);
    if (log)
      *log << "epoch " << epoch << " loss " << rec.loss << " lr " << lr << " val_ppl "
           << rec.val_ppl << " (" << rec.seconds << "s)\n";

    if (!out_dir.empty()) {
      std::snprintf(path_buf, sizeof(path_buf), "/epoch_%03d.ckpt", epoch);
      save_checkpoint(out_dir + path_buf, params, vocab, tcfg, epoch, drop_rng.state);
    }
    const double metric = val_set.empty() ? rec.loss : rec.val_ppl;
    if (metric < best_metric) {
      best_metric = metric;
      result.best_epoch = epoch;
    }
  }

  if (!out_dir.empty()) {
    std::snprintf(path_buf, sizeof(path_buf), "/epoch_%03d.ckpt", result.best_epoch);
    std::filesystem::copy_file(out_dir + path_buf, out_dir + "/best.ckpt",
                               std::filesystem::copy_options::overwrite_existing);
    save_history_csv(out_dir + "/history.csv", result.history);
  }
  return result;
}

}  // namespace noie
