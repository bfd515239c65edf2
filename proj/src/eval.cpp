#include "noie/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "noie/tuples.hpp"
#include "noie/types.hpp"

namespace noie {

void MatchConfig::validate() const {
  if (!(threshold > 0.0 && threshold <= 1.0))
    throw DataError("match threshold must be in (0,1]");
}

namespace {

std::string fold(const std::string& s, bool case_sensitive) {
  if (case_sensitive) return s;
  std::string out = s;
  for (char& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

std::map<std::string, int> slot_counts(const std::vector<std::string>& slot,
                                       bool case_sensitive) {
  std::map<std::string, int> counts;
  for (const auto& tok : slot) ++counts[fold(tok, case_sensitive)];
  return counts;
}

bool slot_covered(const std::vector<std::string>& pred,
                  const std::vector<std::string>& gold, const MatchConfig& cfg) {
  if (gold.empty()) return true;
  auto pc = slot_counts(pred, cfg.case_sensitive);
  auto gc = slot_counts(gold, cfg.case_sensitive);
  long covered = 0;
  for (const auto& [tok, n] : gc) {
    auto it = pc.find(tok);
    if (it != pc.end()) covered += std::min(n, it->second);
  }
  return double(covered) / double(gold.size()) >= cfg.threshold;
}

std::vector<std::string> tuple_key(const Extraction& e) {
  std::vector<std::string> key = e.arg1;
  key.push_back("\t");
  key.insert(key.end(), e.rel.begin(), e.rel.end());
  key.push_back("\t");
  key.insert(key.end(), e.arg2.begin(), e.arg2.end());
  return key;
}

}  // namespace

bool lexical_match(const Extraction& pred, const GoldExtraction& gold,
                   const MatchConfig& cfg) {
  cfg.validate();
  return slot_covered(pred.arg1, gold.arg1, cfg) &&
         slot_covered(pred.rel, gold.rel, cfg) &&
         slot_covered(pred.arg2, gold.arg2, cfg);
}

MatchAssignment score_corpus(const std::vector<Extraction>& preds,
                             const std::vector<GoldExtraction>& golds,
                             const MatchConfig& cfg) {
  cfg.validate();
  MatchAssignment out;
  out.total_gold = golds.size();

  // Canonical order: sentences by id, predictions within a sentence by
  // confidence descending with lexicographic tie-breaking. This makes the
  // assignment independent of input order.
  std::map<std::string, std::vector<Extraction>> by_sentence;
  for (const auto& p : preds) by_sentence[p.sentence_id].push_back(p);
  std::map<std::string, std::vector<std::size_t>> gold_by_sentence;
  for (std::size_t g = 0; g < golds.size(); ++g)
    gold_by_sentence[golds[g].sentence_id].push_back(g);

  for (auto& [sid, group] : by_sentence) {
    std::sort(group.begin(), group.end(), [](const Extraction& a, const Extraction& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      return tuple_key(a) < tuple_key(b);
    });
    std::set<std::size_t> taken;
    auto git = gold_by_sentence.find(sid);
    for (auto& p : group) {
      bool hit = false;
      if (git != gold_by_sentence.end()) {
        for (std::size_t g : git->second) {
          if (taken.count(g)) continue;
          if (lexical_match(p, golds[g], cfg)) {
            taken.insert(g);
            hit = true;
            break;
          }
        }
      }
      out.preds.push_back(p);
      out.matched.push_back(hit);
    }
  }
  return out;
}

std::vector<PRPoint> pr_curve(const MatchAssignment& assignment) {
  if (assignment.total_gold == 0) throw DataError("pr_curve: no gold extractions");
  std::vector<std::size_t> order(assignment.preds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return assignment.preds[a].confidence > assignment.preds[b].confidence;
  });

  std::vector<PRPoint> points;
  std::size_t predicted = 0, matched = 0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    ++predicted;
    if (assignment.matched[order[i]]) ++matched;
    const double conf = assignment.preds[order[i]].confidence;
    // emit once per distinct confidence, after all ties are absorbed
    if (i + 1 < order.size() &&
        assignment.preds[order[i + 1]].confidence == conf)
      continue;
    PRPoint pt;
    pt.threshold = conf;
    pt.matched = matched;
    pt.predicted = predicted;
    pt.gold_total = assignment.total_gold;
    pt.precision = double(matched) / double(predicted);
    pt.recall = double(matched) / double(assignment.total_gold);
    points.push_back(pt);
  }
  return points;
}

double auc(const std::vector<PRPoint>& points) {
  double area = 0.0, prev_recall = 0.0;
  for (const auto& pt : points) {
    area += (pt.recall - prev_recall) * pt.precision;
    prev_recall = pt.recall;
  }
  return area;
}

namespace {

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                          "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

void write_svg(const std::string& path, const std::vector<Report>& reports) {
  const double x0 = 60, x1 = 540, y0 = 360, y1 = 20;  // plot box, y grows up
  auto px = [&](double r) { return x0 + r * (x1 - x0); };
  auto py = [&](double p) { return y0 + p * (y1 - y0); };

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
         "viewBox=\"0 0 640 420\">\n"
      << "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
  for (int i = 0; i <= 5; ++i) {
    double v = i / 5.0;
    out << "<line x1=\"" << fmt(px(v), "%.1f") << "\" y1=\"" << fmt(py(0), "%.1f")
        << "\" x2=\"" << fmt(px(v), "%.1f") << "\" y2=\"" << fmt(py(1), "%.1f")
        << "\" stroke=\"#dddddd\"/>\n"
        << "<line x1=\"" << fmt(px(0), "%.1f") << "\" y1=\"" << fmt(py(v), "%.1f")
        << "\" x2=\"" << fmt(px(1), "%.1f") << "\" y2=\"" << fmt(py(v), "%.1f")
        << "\" stroke=\"#dddddd\"/>\n"
        << "<text x=\"" << fmt(px(v) - 8, "%.1f") << "\" y=\"" << fmt(y0 + 16, "%.1f")
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(v, "%.1f")
        << "</text>\n"
        << "<text x=\"" << fmt(x0 - 34, "%.1f") << "\" y=\"" << fmt(py(v) + 4, "%.1f")
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << fmt(v, "%.1f")
        << "</text>\n";
  }
  out << "<text x=\"280\" y=\"404\" font-size=\"13\" font-family=\"sans-serif\">"
         "recall</text>\n"
      << "<text x=\"14\" y=\"200\" font-size=\"13\" font-family=\"sans-serif\" "
         "transform=\"rotate(-90 14 200)\">precision</text>\n";

  for (std::size_t r = 0; r < reports.size(); ++r) {
    const auto& rep = reports[r];
    const char* color = kPalette[r % (sizeof(kPalette) / sizeof(kPalette[0]))];
    if (!rep.points.empty()) {
      // step interpolation: precision held until each point's recall
      std::string d = "M " + fmt(px(0), "%.2f") + " " +
                      fmt(py(rep.points.front().precision), "%.2f");
      double prev_p = rep.points.front().precision;
      for (const auto& pt : rep.points) {
        if (pt.precision != prev_p) {
          d += " V " + fmt(py(pt.precision), "%.2f");
          prev_p = pt.precision;
        }
        d += " H " + fmt(px(pt.recall), "%.2f");
      }
      out << "<path d=\"" << d << "\" fill=\"none\" stroke=\"" << color
          << "\" stroke-width=\"1.5\"/>\n";
    }
    out << "<rect x=\"556\" y=\"" << fmt(30.0 + 18.0 * double(r), "%.1f")
        << "\" width=\"12\" height=\"4\" fill=\"" << color << "\"/>\n"
        << "<text x=\"572\" y=\"" << fmt(36.0 + 18.0 * double(r), "%.1f")
        << "\" font-size=\"11\" font-family=\"sans-serif\">" << rep.label
        << " (AUC=" << fmt(rep.auc, "%.3f") << ")</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw DataError("write failed: " + path);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::vector<std::string> emit_report(const std::vector<Report>& reports,
                                     const std::string& out_dir) {
  if (reports.empty()) throw DataError("emit_report: no reports");
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> written;
  for (const auto& rep : reports) {
    std::string path = out_dir + "/curve_" + rep.label + ".csv";
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << "threshold,precision,recall\n";
    for (const auto& pt : rep.points)
      out << fmt(pt.threshold) << ',' << fmt(pt.precision) << ',' << fmt(pt.recall)
          << '\n';
    if (!out) throw DataError("write failed: " + path);
    written.push_back(path);
  }
  std::string svg = out_dir + "/pr_curves.svg";
  write_svg(svg, reports);
  written.push_back(svg);
  return written;
}

std::vector<GoldExtraction> load_gold(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<GoldExtraction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 5)
      throw DataError(path + ": line " + std::to_string(lineno) +
                      ": expected 5 fields, got " + std::to_string(f.size()));
    GoldExtraction g;
    g.sentence_id = f[0];
    g.arg1 = tokenize(f[2]);
    g.rel = tokenize(f[3]);
    g.arg2 = tokenize(f[4]);
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<Extraction> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<Extraction> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto f = split_tabs(line);
    if (f.size() != 5)
      throw DataError(path + ": line " + std::to_string(lineno) +
                      ": expected 5 fields, got " + std::to_string(f.size()));
    Extraction e;
    e.sentence_id = f[0];
    try {
      e.confidence = std::stod(f[1]);
    } catch (const std::exception&) {
      throw DataError(path + ": line " + std::to_string(lineno) +
                      ": unparseable confidence '" + f[1] + "'");
    }
    e.arg1 = tokenize(f[2]);
    e.rel = tokenize(f[3]);
    e.arg2 = tokenize(f[4]);
    out.push_back(std::move(e));
  }
  return out;
}

void save_predictions(const std::string& path, const std::vector<Extraction>& preds) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& e : preds) {
    out << e.sentence_id << '\t' << fmt(e.confidence) << '\t' << join_tokens(e.arg1)
        << '\t' << join_tokens(e.rel) << '\t' << join_tokens(e.arg2) << '\n';
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace noie
