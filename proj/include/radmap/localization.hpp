#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "radmap/geometry.hpp"
#include "radmap/reconstruction.hpp"

namespace radmap {

struct LocalizeSettings {
  int max_peaks = 1;
  double suppression_radius_m = 1.0;
  double peak_fraction = 0.5;  // rival/first ratio that still counts as a peak
  long min_counts = 20;        // imageable events needed before localizing
};

struct SourceEstimate {
  std::string window_label;
  Vec3 position{0.0, 0.0, 0.0};  // voxel center, metres, world
  double value = 0.0;
  int rank = 0;  // 1 = strongest
};

// Greedy non-maximum suppression: take the global argmax, zero everything
// within the suppression radius, repeat. Stops at max_peaks, at zero, or
// when the next peak falls below peak_fraction of the first. Throws
// EmptyGrid when the grid has no positive value.
std::vector<SourceEstimate> extract_peaks(const Grid& grid, int max_peaks,
                                          double suppression_radius_m,
                                          double peak_fraction = 0.5);

struct PeakExtraction {
  std::vector<SourceEstimate> estimates;  // at most settings.max_peaks
  bool ambiguous = false;  // a rival >= peak_fraction of the first was cut off
};

// extract_peaks plus a one-peak lookahead so that a rival peak beyond
// max_peaks is reported instead of silently discarded.
PeakExtraction localize_window(const Grid& grid, const std::string& label,
                               const LocalizeSettings& settings);

struct TruthEntry {
  std::string window_label;
  Vec3 position{0.0, 0.0, 0.0};
};

// One energy window's reconstruction output as seen by the scorer.
struct WindowResult {
  std::string label;
  PeakExtraction peaks;
  std::size_t imageable_count = 0;
};

enum class Status { Ok, InsufficientCounts, AmbiguousPeaks };

std::string to_string(Status s);

struct ReportRow {
  std::string scenario;
  std::string window;
  Vec3 truth{0.0, 0.0, 0.0};
  bool has_estimate = false;
  Vec3 estimate{0.0, 0.0, 0.0};
  double error = 0.0;  // metres, meaningful only when status == Ok
  Status status = Status::Ok;
  std::size_t counts = 0;
};

struct LocalizationReport {
  std::vector<ReportRow> rows;
};

// Greedy nearest-neighbor assignment of estimates to same-window truths.
// A window below min_counts marks all its truths insufficient_counts; an
// ambiguous extraction (or more truths than estimates) marks them
// ambiguous_peaks. Throws LabelMismatch when a truth's window is absent.
LocalizationReport score(const std::string& scenario,
                         const std::vector<WindowResult>& windows,
                         const std::vector<TruthEntry>& truths,
                         const LocalizeSettings& settings);

struct ReportSummary {
  double mean_error = 0.0;  // over ok rows, matching the n/a exclusion rule
  double max_error = 0.0;
  std::size_t n_ok = 0;
  std::size_t n_na = 0;
};

// Throws NoOkRows when nothing localized.
ReportSummary summary(const LocalizationReport& report);

// One `scenario window truth_xyz est_xyz error status counts` line per row,
// `n/a` for absent estimates, then a trailing `#` summary block.
// One whitespace-delimited line, no trailing newline:
//   scenario window truth_x truth_y truth_z est_x est_y est_z error status
//   counts
// with `n/a` estimate and error fields on rows that did not localize.
std::string format_report_row(const ReportRow& row);

// The `# summary:` trailer line, no trailing newline.
std::string format_report_summary(const LocalizationReport& report);

void save_report(const std::string& path, const LocalizationReport& report);
LocalizationReport load_report(const std::string& path);

}  // namespace radmap
