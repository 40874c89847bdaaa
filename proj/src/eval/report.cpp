#include "mgpms/eval/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "mgpms/error.hpp"

namespace mgpms::eval {

ScoreColumn parse_score_column(const std::string& name) {
  if (name == "mc_probability") return ScoreColumn::McProbability;
  if (name == "probability") return ScoreColumn::Probability;
  if (name == "logit") return ScoreColumn::Logit;
  throw ConfigError("unknown score column '" + name + "' (expected mc_probability, probability or logit)");
}

std::string score_column_name(ScoreColumn c) {
  switch (c) {
    case ScoreColumn::McProbability:
      return "mc_probability";
    case ScoreColumn::Probability:
      return "probability";
    default:
      return "logit";
  }
}

std::vector<Trajectory> trajectories_from(const std::vector<model::PatientPrediction>& predictions,
                                          ScoreColumn column) {
  std::vector<Trajectory> out;
  for (const auto& p : predictions) {
    Trajectory t{p.id, p.label, {}};
    switch (column) {
      case ScoreColumn::McProbability:
        if (p.mc_probability.empty()) throw ConfigError("predictions carry no Monte Carlo column");
        t.scores = p.mc_probability;
        break;
      case ScoreColumn::Probability:
        t.scores = p.probabilities;
        break;
      case ScoreColumn::Logit:
        t.scores = p.logits;
        break;
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string format_number(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string predictions_csv(const std::vector<model::PatientPrediction>& predictions, const mgp::TimeGrid& grid) {
  std::string out = "patient_id,window,hour,logit,probability,mc_probability\n";
  for (const auto& p : predictions)
    for (std::size_t j = 0; j < p.logits.size(); ++j) {
      out += p.id + "," + std::to_string(j + 1) + "," + format_number(grid.points.at(j)) + "," +
             format_number(p.logits[j]) + "," + format_number(p.probabilities[j]) + "," +
             (p.mc_probability.empty() ? std::string() : format_number(p.mc_probability[j])) + "\n";
    }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && s[i] == ' ') ++i;
  return s.substr(i);
}

std::string time_name(double hour) {
  if (hour == 0.0) return "admission";
  const double days = hour / 24.0;
  if (days == std::floor(days * 2.0) / 2.0) return format_number(days) + "d";
  return format_number(hour) + "h";
}

}  // namespace

std::vector<Trajectory> read_trajectories_csv(const std::string& text, const std::vector<data::WindowedPatient>& cohort,
                                              std::size_t windows, const std::string& score_column) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("trajectory file is empty");
  const auto header = split_csv_line(trim(line));
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("trajectory file lacks a '" + name + "' column");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_id = column("patient_id"), c_window = column("window"), c_score = column(score_column);

  std::map<std::string, int> labels;
  for (const auto& p : cohort) labels[p.id] = p.label;
  std::vector<Trajectory> out;
  std::map<std::string, std::size_t> position;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    const std::string where = "trajectory line " + std::to_string(line_no);
    if (cells.size() < header.size()) throw DataError(where + " has too few columns");
    const std::string& id = cells[c_id];
    const auto label = labels.find(id);
    if (label == labels.end()) throw DataError(where + ": patient " + id + " has no label in the cohort");
    std::size_t window = 0;
    double score = 0.0;
    try {
      window = std::stoul(cells[c_window]);
      score = std::stod(cells[c_score]);
    } catch (const std::exception&) {
      throw DataError(where + " has a non-numeric window or score");
    }
    if (window < 1 || window > windows) throw DataError(where + " has window outside 1.." + std::to_string(windows));
    if (!std::isfinite(score)) throw DataError(where + " has a non-finite score");
    auto [it, fresh] = position.try_emplace(id, out.size());
    if (fresh) out.push_back({id, label->second, std::vector<double>(windows, NAN)});
    out[it->second].scores[window - 1] = score;
  }
  for (const auto& t : out)
    for (double s : t.scores)
      if (std::isnan(s)) throw DataError("patient " + t.id + " is missing windows in the trajectory file");
  if (out.empty()) throw DataError("trajectory file has no rows");
  return out;
}

std::vector<TimepointResult> evaluate_timepoints(const std::vector<Trajectory>& trajectories,
                                                 const data::CohortConfig& cohort, const std::vector<double>& hours) {
  std::vector<TimepointResult> out;
  std::vector<int> labels;
  for (const auto& t : trajectories) labels.push_back(t.label);
  for (double h : hours) {
    TimepointResult r;
    r.name = time_name(h);
    r.hour = h;
    r.window = cohort.window_at(h);
    std::vector<double> scores;
    for (const auto& t : trajectories) scores.push_back(t.scores.at(r.window - 1));
    r.auc = auc(labels, scores);
    r.auprc = auprc(labels, scores);
    out.push_back(r);
  }
  return out;
}

std::string timepoints_csv(const std::vector<TimepointResult>& results) {
  std::string head = "metric", auc_row = "auc", auprc_row = "auprc";
  for (const auto& r : results) {
    head += "," + r.name;
    auc_row += "," + format_number(r.auc);
    auprc_row += "," + format_number(r.auprc);
  }
  return head + "\n" + auc_row + "\n" + auprc_row + "\n";
}

namespace {

ClassCurve curve_for(const std::vector<std::vector<double>>& normalized, const std::vector<Trajectory>& t,
                     const std::vector<PatientTrajectoryMetrics>& metrics, int label, std::size_t x) {
  ClassCurve c;
  c.mean.assign(x, 0.0);
  c.sd.assign(x, 0.0);
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].label != label) continue;
    ++c.patients;
    for (std::size_t j = 0; j < x; ++j) c.mean[j] += normalized[i][j];
    c.mean_slope += metrics[i].metrics.slope;
    c.mean_consistency += metrics[i].metrics.consistency;
    c.mean_robustness += metrics[i].metrics.robustness;
  }
  if (c.patients == 0) return c;
  const double n = static_cast<double>(c.patients);
  for (auto& m : c.mean) m /= n;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i].label != label) continue;
    for (std::size_t j = 0; j < x; ++j) c.sd[j] += (normalized[i][j] - c.mean[j]) * (normalized[i][j] - c.mean[j]);
  }
  for (auto& s : c.sd) s = std::sqrt(s / n);
  c.mean_slope /= n;
  c.mean_consistency /= n;
  c.mean_robustness /= n;
  return c;
}

}  // namespace

TrajectorySummary trajectory_summary(const std::vector<Trajectory>& trajectories, const mgp::TimeGrid& grid,
                                     std::size_t bins) {
  if (trajectories.empty()) throw DataError("no trajectories to summarize");
  if (bins == 0) throw ConfigError("histogram needs at least one bin");
  const std::size_t x = grid.size();
  std::vector<std::vector<double>> raw;
  for (const auto& t : trajectories) {
    if (t.scores.size() != x) throw ShapeError("trajectory " + t.id + " does not have one score per window");
    raw.push_back(t.scores);
  }
  TrajectorySummary s;
  s.bins = bins;
  s.hours = grid.points;
  s.normalization = MinMax::fit(raw);
  std::vector<std::vector<double>> normalized;
  for (const auto& r : raw) normalized.push_back(s.normalization.apply(r));
  for (std::size_t i = 0; i < trajectories.size(); ++i)
    s.patients.push_back({trajectories[i].id, trajectories[i].label, trajectory_metrics(s.hours, normalized[i])});
  s.negative = curve_for(normalized, trajectories, s.patients, 0, x);
  s.positive = curve_for(normalized, trajectories, s.patients, 1, x);
  s.histogram_negative.assign(bins, 0);
  s.histogram_positive.assign(bins, 0);
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    const double v = normalized[i].back();
    const std::size_t b = std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)));
    (trajectories[i].label == 1 ? s.histogram_positive : s.histogram_negative)[b]++;
  }
  return s;
}

std::string class_curves_csv(const TrajectorySummary& s) {
  std::string out = "window,hour,class,patients,mean,sd\n";
  for (const auto& [name, c] : {std::pair{"negative", &s.negative}, std::pair{"positive", &s.positive}}) {
    if (c->patients == 0) continue;
    for (std::size_t j = 0; j < s.hours.size(); ++j)
      out += std::to_string(j + 1) + "," + format_number(s.hours[j]) + "," + name + "," +
             std::to_string(c->patients) + "," + format_number(c->mean[j]) + "," + format_number(c->sd[j]) + "\n";
  }
  return out;
}

std::string patient_metrics_csv(const TrajectorySummary& s) {
  std::string out = "patient_id,label,slope,consistency,mse,robustness\n";
  for (const auto& p : s.patients)
    out += p.id + "," + std::to_string(p.label) + "," + format_number(p.metrics.slope) + "," +
           format_number(p.metrics.consistency) + "," + format_number(p.metrics.mse) + "," +
           format_number(p.metrics.robustness) + "\n";
  return out;
}

std::string histogram_csv(const TrajectorySummary& s) {
  std::string out = "bin_lo,bin_hi,negative,positive\n";
  for (std::size_t b = 0; b < s.bins; ++b) {
    const double lo = static_cast<double>(b) / static_cast<double>(s.bins);
    const double hi = static_cast<double>(b + 1) / static_cast<double>(s.bins);
    out += format_number(lo) + "," + format_number(hi) + "," + std::to_string(s.histogram_negative[b]) + "," +
           std::to_string(s.histogram_positive[b]) + "\n";
  }
  return out;
}

Json summary_json(const TrajectorySummary& s, const std::vector<TimepointResult>& timepoints) {
  Json j;
  j["auprc_estimator"] = "average_precision";
  j["normalization"] = {{"kind", "global_min_max"}, {"min", s.normalization.lo}, {"max", s.normalization.hi}};
  j["slope_units"] = "normalized score per hour";
  Json times = Json::array();
  for (const auto& t : timepoints)
    times.push_back({{"name", t.name}, {"hour", t.hour}, {"window", t.window}, {"auc", t.auc}, {"auprc", t.auprc}});
  j["timepoints"] = std::move(times);
  for (const auto& [name, c] : {std::pair{"negative", &s.negative}, std::pair{"positive", &s.positive}})
    j["classes"][name] = {{"patients", c->patients},
                          {"mean_slope", c->mean_slope},
                          {"mean_consistency", c->mean_consistency},
                          {"mean_robustness", c->mean_robustness}};
  return j;
}

std::string class_curves_svg(const TrajectorySummary& s) {
  const double w = 480, h = 300, left = 50, right = 110, top = 20, bottom = 40;
  const double x0 = s.hours.front(), x1 = s.hours.back() > x0 ? s.hours.back() : x0 + 1.0;
  auto px = [&](double hour) { return left + (hour - x0) / (x1 - x0) * (w - left - right); };
  auto py = [&](double v) { return top + (1.0 - v) * (h - top - bottom); };
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << w - right << "\" y2=\"" << py(0)
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << py(0) << "\" x2=\"" << left << "\" y2=\"" << py(1)
    << "\" stroke=\"black\"/>\n";
  for (double v : {0.0, 0.5, 1.0})
    o << "<text x=\"" << left - 8 << "\" y=\"" << py(v) + 4 << "\" font-size=\"11\" text-anchor=\"end\">" << v
      << "</text>\n";
  o << "<text x=\"" << (left + w - right) / 2 << "\" y=\"" << h - 8
    << "\" font-size=\"12\" text-anchor=\"middle\">hour</text>\n";
  const std::pair<const char*, const ClassCurve*> classes[] = {{"negative", &s.negative}, {"positive", &s.positive}};
  const char* colors[] = {"#1f77b4", "#d62728"};
  for (std::size_t k = 0; k < 2; ++k) {
    const ClassCurve& c = *classes[k].second;
    if (c.patients == 0) continue;
    o << "<polyline fill=\"none\" stroke=\"" << colors[k] << "\" stroke-width=\"2\" points=\"";
    for (std::size_t j = 0; j < s.hours.size(); ++j) o << (j ? " " : "") << px(s.hours[j]) << "," << py(c.mean[j]);
    o << "\"/>\n";
    o << "<text x=\"" << w - right + 8 << "\" y=\"" << top + 16 + 18 * static_cast<double>(k) << "\" font-size=\"12\" fill=\""
      << colors[k] << "\">" << classes[k].first << " (n=" << c.patients << ")</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

}  // namespace mgpms::eval
