#pragma once

#include <string>
#include <vector>

namespace noie {

// One predicted tuple with its confidence; sentence ids are opaque strings.
struct Extraction {
  std::string sentence_id;
  std::vector<std::string> arg1, rel, arg2;
  double confidence = 1.0;
};

struct GoldExtraction {
  std::string sentence_id;
  std::vector<std::string> arg1, rel, arg2;
};

struct MatchConfig {
  double threshold = 0.5;       // per-slot gold-coverage ratio
  bool case_sensitive = false;

  void validate() const;
};

// True iff every slot of `pred` covers at least `threshold` of the
// corresponding gold slot's tokens (multiset intersection over gold size).
bool lexical_match(const Extraction& pred, const GoldExtraction& gold,
                   const MatchConfig& cfg);

struct MatchAssignment {
  // Parallel to the canonical prediction order (confidence-descending
  // within each sentence, ties by tuple lexicographic order).
  std::vector<Extraction> preds;
  std::vector<bool> matched;
  std::size_t total_gold = 0;
};

// Greedy confidence-ordered matching: each prediction takes the first
// eligible unmatched gold (gold file order); each gold matches once.
MatchAssignment score_corpus(const std::vector<Extraction>& preds,
                             const std::vector<GoldExtraction>& golds,
                             const MatchConfig& cfg);

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t matched = 0;
  std::size_t predicted = 0;
  std::size_t gold_total = 0;
};

// Threshold sweep over every distinct confidence, descending. Errors when
// there are no gold extractions; no predictions yields an empty curve.
std::vector<PRPoint> pr_curve(const MatchAssignment& assignment);

// Area under the step-interpolated precision-recall curve: precision of
// each point held over (previous recall, its recall]. Empty curve = 0.
double auc(const std::vector<PRPoint>& points);

struct Report {
  std::string label;
  std::vector<PRPoint> points;
  double auc = 0.0;
};

// Writes curve_<label>.csv per report plus a single pr_curves.svg overlay
// with AUCs in the legend. Returns the paths written.
std::vector<std::string> emit_report(const std::vector<Report>& reports,
                                     const std::string& out_dir);

// Benchmark gold TSV: sentence_id \t sentence \t arg1 \t rel \t arg2.
std::vector<GoldExtraction> load_gold(const std::string& path);
// Prediction TSV: sentence_id \t confidence \t arg1 \t rel \t arg2.
std::vector<Extraction> load_predictions(const std::string& path);
void save_predictions(const std::string& path, const std::vector<Extraction>& preds);

}  // namespace noie
