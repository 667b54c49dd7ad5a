#include "radmap/localization.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "radmap/errors.hpp"

namespace radmap {

std::vector<SourceEstimate> extract_peaks(const Grid& grid, int max_peaks,
                                          double suppression_radius_m,
                                          double peak_fraction) {
  if (grid.empty()) throw EmptyGrid("extract_peaks: empty grid");
  if (max_peaks < 1) throw OutOfRange("extract_peaks: max_peaks must be >= 1");
  if (suppression_radius_m < grid.resolution) {
    throw OutOfRange("extract_peaks: suppression radius below grid resolution");
  }

  std::vector<double> work = grid.values;
  std::vector<SourceEstimate> peaks;
  double first_value = 0.0;
  while (static_cast<int>(peaks.size()) < max_peaks) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < work.size(); ++j) {
      if (work[j] > work[best]) best = j;
    }
    const double v = work[best];
    if (!(v > 0.0)) break;
    if (peaks.empty()) {
      first_value = v;
    } else if (v < peak_fraction * first_value) {
      break;
    }
    SourceEstimate est;
    est.position = grid.center(best);
    est.value = v;
    est.rank = static_cast<int>(peaks.size()) + 1;
    peaks.push_back(est);

    const Vec3 c = grid.center(best);
    const double r2 = suppression_radius_m * suppression_radius_m;
    for (std::size_t j = 0; j < work.size(); ++j) {
      if (work[j] != 0.0 && (grid.center(j) - c).squaredNorm() <= r2) {
        work[j] = 0.0;
      }
    }
  }
  if (peaks.empty()) throw EmptyGrid("extract_peaks: grid has no positive value");
  return peaks;
}

PeakExtraction localize_window(const Grid& grid, const std::string& label,
                               const LocalizeSettings& settings) {
  PeakExtraction out;
  auto probe = extract_peaks(grid, settings.max_peaks + 1,
                             settings.suppression_radius_m,
                             settings.peak_fraction);
  out.ambiguous = static_cast<int>(probe.size()) > settings.max_peaks;
  if (out.ambiguous) probe.resize(settings.max_peaks);
  for (auto& est : probe) est.window_label = label;
  out.estimates = std::move(probe);
  return out;
}

std::string to_string(Status s) {
  switch (s) {
    case Status::Ok: return "ok";
    case Status::InsufficientCounts: return "insufficient_counts";
    case Status::AmbiguousPeaks: return "ambiguous_peaks";
  }
  return "unknown";
}

namespace {

Status status_from_string(const std::string& s, const std::string& origin) {
  if (s == "ok") return Status::Ok;
  if (s == "insufficient_counts") return Status::InsufficientCounts;
  if (s == "ambiguous_peaks") return Status::AmbiguousPeaks;
  throw ParseError(origin + ": unknown status '" + s + "'");
}

}  // namespace

LocalizationReport score(const std::string& scenario,
                         const std::vector<WindowResult>& windows,
                         const std::vector<TruthEntry>& truths,
                         const LocalizeSettings& settings) {
  LocalizationReport report;

  std::vector<std::string> labels;
  for (const auto& t : truths) {
    if (std::find(labels.begin(), labels.end(), t.window_label) == labels.end()) {
      labels.push_back(t.window_label);
    }
  }

  for (const auto& label : labels) {
    const WindowResult* wr = nullptr;
    for (const auto& w : windows) {
      if (w.label == label) {
        wr = &w;
        break;
      }
    }
    if (!wr) {
      throw LabelMismatch("score: no reconstruction output for window '" +
                          label + "'");
    }

    std::vector<std::size_t> truth_idx;
    for (std::size_t i = 0; i < truths.size(); ++i) {
      if (truths[i].window_label == label) truth_idx.push_back(i);
    }

    const auto emit_all = [&](Status status) {
      for (const std::size_t i : truth_idx) {
        ReportRow row;
        row.scenario = scenario;
        row.window = label;
        row.truth = truths[i].position;
        row.status = status;
        row.counts = wr->imageable_count;
        report.rows.push_back(row);
      }
    };

    if (wr->imageable_count < static_cast<std::size_t>(
                                  std::max<long>(0, settings.min_counts))) {
      emit_all(Status::InsufficientCounts);
      continue;
    }
    if (wr->peaks.ambiguous ||
        truth_idx.size() > wr->peaks.estimates.size()) {
      emit_all(Status::AmbiguousPeaks);
      continue;
    }

    // Greedy unique assignment by ascending distance, deterministic order.
    struct Pair {
      double dist;
      std::size_t est;
      std::size_t truth;
    };
    std::vector<Pair> pairs;
    for (std::size_t e = 0; e < wr->peaks.estimates.size(); ++e) {
      for (std::size_t k = 0; k < truth_idx.size(); ++k) {
        pairs.push_back(
            {(wr->peaks.estimates[e].position - truths[truth_idx[k]].position)
                 .norm(),
             e, k});
      }
    }
    std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
      if (a.dist != b.dist) return a.dist < b.dist;
      if (a.est != b.est) return a.est < b.est;
      return a.truth < b.truth;
    });
    std::vector<long> match(truth_idx.size(), -1);
    std::vector<bool> est_used(wr->peaks.estimates.size(), false);
    for (const auto& p : pairs) {
      if (est_used[p.est] || match[p.truth] >= 0) continue;
      est_used[p.est] = true;
      match[p.truth] = static_cast<long>(p.est);
    }

    for (std::size_t k = 0; k < truth_idx.size(); ++k) {
      ReportRow row;
      row.scenario = scenario;
      row.window = label;
      row.truth = truths[truth_idx[k]].position;
      row.counts = wr->imageable_count;
      row.status = Status::Ok;
      row.has_estimate = true;
      row.estimate = wr->peaks.estimates[static_cast<std::size_t>(match[k])].position;
      row.error = (row.estimate - row.truth).norm();
      report.rows.push_back(row);
    }
  }
  return report;
}

ReportSummary summary(const LocalizationReport& report) {
  ReportSummary s;
  double sum = 0.0;
  for (const auto& row : report.rows) {
    if (row.status == Status::Ok) {
      ++s.n_ok;
      sum += row.error;
      s.max_error = std::max(s.max_error, row.error);
    } else {
      ++s.n_na;
    }
  }
  if (s.n_ok == 0) throw NoOkRows("summary: no ok rows in report");
  s.mean_error = sum / static_cast<double>(s.n_ok);
  return s;
}

std::string format_report_row(const ReportRow& row) {
  char line[512];
  if (row.status == Status::Ok && row.has_estimate) {
    std::snprintf(line, sizeof(line),
                  "%s %s %.12g %.12g %.12g %.12g %.12g %.12g %.12g %s %zu",
                  row.scenario.c_str(), row.window.c_str(), row.truth.x(),
                  row.truth.y(), row.truth.z(), row.estimate.x(),
                  row.estimate.y(), row.estimate.z(), row.error,
                  to_string(row.status).c_str(), row.counts);
  } else {
    std::snprintf(line, sizeof(line),
                  "%s %s %.12g %.12g %.12g n/a n/a n/a n/a %s %zu",
                  row.scenario.c_str(), row.window.c_str(), row.truth.x(),
                  row.truth.y(), row.truth.z(), to_string(row.status).c_str(),
                  row.counts);
  }
  return line;
}

std::string format_report_summary(const LocalizationReport& report) {
  char line[256];
  try {
    const ReportSummary s = summary(report);
    std::snprintf(line, sizeof(line),
                  "# summary: ok=%zu na=%zu mean_error=%.12g max_error=%.12g",
                  s.n_ok, s.n_na, s.mean_error, s.max_error);
  } catch (const NoOkRows&) {
    std::snprintf(line, sizeof(line), "# summary: ok=0 na=%zu",
                  report.rows.size());
  }
  return line;
}

void save_report(const std::string& path, const LocalizationReport& report) {
  std::ofstream out(path);
  if (!out) throw ParseError("save_report: cannot open " + path);
  out << "# scenario window truth_x truth_y truth_z est_x est_y est_z error "
         "status counts\n";
  for (const auto& row : report.rows) out << format_report_row(row) << "\n";
  out << format_report_summary(report) << "\n";
}

LocalizationReport load_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_report: cannot open " + path);
  LocalizationReport report;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    std::istringstream ss(raw);
    ReportRow row;
    std::string ex, ey, ez, err, status;
    if (!(ss >> row.scenario)) continue;
    const std::string origin = path + ":" + std::to_string(line_no);
    if (!(ss >> row.window >> row.truth.x() >> row.truth.y() >> row.truth.z() >>
          ex >> ey >> ez >> err >> status >> row.counts)) {
      throw ParseError(origin + ": malformed report row");
    }
    row.status = status_from_string(status, origin);
    if (ex == "n/a") {
      row.has_estimate = false;
    } else {
      row.has_estimate = true;
      try {
        row.estimate = Vec3(std::stod(ex), std::stod(ey), std::stod(ez));
        row.error = std::stod(err);
      } catch (const std::exception&) {
        throw ParseError(origin + ": malformed estimate columns");
      }
    }
    report.rows.push_back(row);
  }
  return report;
}

}  // namespace radmap
