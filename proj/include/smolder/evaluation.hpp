#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "smolder/components.hpp"
#include "smolder/grid.hpp"

namespace smolder {

/// How the overlap between a predicted blob and a ground-truth blob is normalized.
enum class OverlapRule {
    GtFraction,  // |pred ∩ gt| / |gt|
    IoU,         // |pred ∩ gt| / |pred ∪ gt|
};

struct MatchConfig {
    OverlapRule rule = OverlapRule::GtFraction;
    double overlap_threshold = 0.30;  // strict: overlap must exceed it
    double spot_fraction = 0.30;      // strict: matched-spot fraction must exceed it

    void validate() const;
};

/// 2|P∩G| / (|P|+|G|); two empty masks score 1.
double dice_score(const BinaryMask& pred, const BinaryMask& gt);

/// 8-connected foreground components in (top, left) order.
std::vector<Blob> extract_blobs(const BinaryMask& mask);

/// Overlap of every (pred, gt) pair under `rule`; result[i][j] is pred i vs gt j.
std::vector<std::vector<double>> blob_overlaps(const std::vector<Blob>& pred, const std::vector<Blob>& gt,
                                               OverlapRule rule);

struct BlobPrecision {
    int true_positives = 0;
    int false_positives = 0;
    std::optional<double> precision;  // empty when no blobs were predicted
};

/// A predicted blob is a true positive iff it overlaps some gt blob by more
/// than the threshold; otherwise it is a false positive.
BlobPrecision blob_precision(const std::vector<Blob>& pred, const std::vector<Blob>& gt,
                             const MatchConfig& cfg = {});

struct ClipClassification {
    bool gt_fire = false;
    bool pred_fire = false;
    int gt_spots = 0;
    int matched_spots = 0;
    bool correct() const { return gt_fire == pred_fire; }
};

/// Fire clips are detected when more than `spot_fraction` of the gt spots are
/// matched. For non-fire clips any predicted blob is a false alarm.
ClipClassification classify_clip(const std::vector<Blob>& pred, const std::vector<Blob>& gt,
                                 const MatchConfig& cfg = {});

struct ClipMetrics {
    std::string clip_id;
    double dice = 0.0;
    int true_positives = 0;
    int false_positives = 0;
    std::optional<double> precision;
    bool gt_fire = false;
    bool pred_fire = false;
    int gt_spots = 0;
    int matched_spots = 0;

    bool correct() const { return gt_fire == pred_fire; }
    bool operator==(const ClipMetrics&) const = default;
};

struct AggregateMetrics {
    int n_clips = 0;
    double mean_dice = 0.0;
    std::optional<double> precision;  // mean over clips with defined precision
    int precision_clips = 0;
    double accuracy = 0.0;
    int correct = 0;
    int true_positives = 0;
    int false_positives = 0;

    bool operator==(const AggregateMetrics&) const = default;
};

struct MetricsReport {
    std::vector<ClipMetrics> clips;
    AggregateMetrics aggregate;
};

ClipMetrics evaluate_clip(const std::string& clip_id, const BinaryMask& pred, const BinaryMask& gt,
                          const MatchConfig& cfg = {});

AggregateMetrics aggregate_metrics(const std::vector<ClipMetrics>& clips);
MetricsReport make_report(std::vector<ClipMetrics> clips);

// Line-delimited JSON: one {"type":"clip",...} record per clip followed by a
// single {"type":"aggregate",...} record.
void write_report_jsonl(const MetricsReport& report, std::ostream& out);
MetricsReport read_report_jsonl(std::istream& in);

/// Fixed-width table for terminals.
std::string format_report_table(const MetricsReport& report);

}  // namespace smolder
