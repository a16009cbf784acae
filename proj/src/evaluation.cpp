#include "smolder/evaluation.hpp"

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "json.hpp"

namespace smolder {
namespace {

using nlohmann::json;

double overlap_value(int intersection, int pred_area, int gt_area, OverlapRule rule) {
    if (rule == OverlapRule::GtFraction) return static_cast<double>(intersection) / gt_area;
    return static_cast<double>(intersection) / (pred_area + gt_area - intersection);
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

void MatchConfig::validate() const {
    if (!(overlap_threshold >= 0.0 && overlap_threshold < 1.0))
        throw ConfigError("eval.overlap_threshold must lie in [0, 1)");
    if (!(spot_fraction >= 0.0 && spot_fraction < 1.0)) throw ConfigError("eval.spot_fraction must lie in [0, 1)");
}

double dice_score(const BinaryMask& pred, const BinaryMask& gt) {
    if (!pred.same_shape(gt))
        throw InputError("dice_score: prediction " + std::to_string(pred.rows()) + "x" + std::to_string(pred.cols()) +
                         " vs ground truth " + std::to_string(gt.rows()) + "x" + std::to_string(gt.cols()));
    std::size_t inter = 0, p = 0, g = 0;
    auto pp = pred.pixels();
    auto gp = gt.pixels();
    for (std::size_t i = 0; i < pp.size(); ++i) {
        const bool a = pp[i] != 0, b = gp[i] != 0;
        p += a;
        g += b;
        inter += a && b;
    }
    if (p + g == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p + g);
}

std::vector<Blob> extract_blobs(const BinaryMask& mask) { return connected_components(mask, Connectivity::Eight); }

std::vector<std::vector<double>> blob_overlaps(const std::vector<Blob>& pred, const std::vector<Blob>& gt,
                                               OverlapRule rule) {
    // Label gt pixels once, then each predicted pixel votes for the gt blob it lands on.
    std::map<std::pair<int, int>, int> gt_label;
    for (std::size_t j = 0; j < gt.size(); ++j)
        for (const Pixel& p : gt[j].pixels) gt_label[{p.row, p.col}] = static_cast<int>(j);

    std::vector<std::vector<double>> out(pred.size(), std::vector<double>(gt.size(), 0.0));
    for (std::size_t i = 0; i < pred.size(); ++i) {
        std::vector<int> inter(gt.size(), 0);
        for (const Pixel& p : pred[i].pixels)
            if (auto it = gt_label.find({p.row, p.col}); it != gt_label.end()) ++inter[it->second];
        for (std::size_t j = 0; j < gt.size(); ++j)
            out[i][j] = overlap_value(inter[j], pred[i].area(), gt[j].area(), rule);
    }
    return out;
}

BlobPrecision blob_precision(const std::vector<Blob>& pred, const std::vector<Blob>& gt, const MatchConfig& cfg) {
    const auto overlaps = blob_overlaps(pred, gt, cfg.rule);
    BlobPrecision result;
    for (const auto& row : overlaps) {
        bool hit = false;
        for (double v : row) hit = hit || v > cfg.overlap_threshold;
        (hit ? result.true_positives : result.false_positives)++;
    }
    const int total = result.true_positives + result.false_positives;
    if (total > 0) result.precision = static_cast<double>(result.true_positives) / total;
    return result;
}

ClipClassification classify_clip(const std::vector<Blob>& pred, const std::vector<Blob>& gt, const MatchConfig& cfg) {
    ClipClassification c;
    c.gt_spots = static_cast<int>(gt.size());
    c.gt_fire = !gt.empty();
    if (gt.empty()) {
        c.pred_fire = !pred.empty();
        return c;
    }
    const auto overlaps = blob_overlaps(pred, gt, cfg.rule);
    for (std::size_t j = 0; j < gt.size(); ++j) {
        bool matched = false;
        for (const auto& row : overlaps) matched = matched || row[j] > cfg.overlap_threshold;
        c.matched_spots += matched;
    }
    c.pred_fire = static_cast<double>(c.matched_spots) / c.gt_spots > cfg.spot_fraction;
    return c;
}

ClipMetrics evaluate_clip(const std::string& clip_id, const BinaryMask& pred, const BinaryMask& gt,
                          const MatchConfig& cfg) {
    ClipMetrics m;
    m.clip_id = clip_id;
    m.dice = dice_score(pred, gt);
    const auto pred_blobs = extract_blobs(pred);
    const auto gt_blobs = extract_blobs(gt);
    const auto bp = blob_precision(pred_blobs, gt_blobs, cfg);
    m.true_positives = bp.true_positives;
    m.false_positives = bp.false_positives;
    m.precision = bp.precision;
    const auto cls = classify_clip(pred_blobs, gt_blobs, cfg);
    m.gt_fire = cls.gt_fire;
    m.pred_fire = cls.pred_fire;
    m.gt_spots = cls.gt_spots;
    m.matched_spots = cls.matched_spots;
    return m;
}

AggregateMetrics aggregate_metrics(const std::vector<ClipMetrics>& clips) {
    AggregateMetrics a;
    a.n_clips = static_cast<int>(clips.size());
    if (clips.empty()) return a;
    double dice_sum = 0.0, precision_sum = 0.0;
    for (const auto& c : clips) {
        dice_sum += c.dice;
        a.correct += c.correct();
        a.true_positives += c.true_positives;
        a.false_positives += c.false_positives;
        if (c.precision) {
            precision_sum += *c.precision;
            ++a.precision_clips;
        }
    }
    a.mean_dice = dice_sum / a.n_clips;
    a.accuracy = static_cast<double>(a.correct) / a.n_clips;
    if (a.precision_clips > 0) a.precision = precision_sum / a.precision_clips;
    return a;
}

MetricsReport make_report(std::vector<ClipMetrics> clips) {
    MetricsReport r;
    r.aggregate = aggregate_metrics(clips);
    r.clips = std::move(clips);
    return r;
}

void write_report_jsonl(const MetricsReport& report, std::ostream& out) {
    for (const auto& c : report.clips) {
        json j = {{"type", "clip"},
                  {"clip_id", c.clip_id},
                  {"dice", c.dice},
                  {"tp", c.true_positives},
                  {"fp", c.false_positives},
                  {"precision", optional_number(c.precision)},
                  {"gt_fire", c.gt_fire},
                  {"pred_fire", c.pred_fire},
                  {"gt_spots", c.gt_spots},
                  {"matched_spots", c.matched_spots}};
        out << j.dump() << '\n';
    }
    const auto& a = report.aggregate;
    json j = {{"type", "aggregate"},
              {"n_clips", a.n_clips},
              {"mean_dice", a.mean_dice},
              {"precision", optional_number(a.precision)},
              {"precision_clips", a.precision_clips},
              {"accuracy", a.accuracy},
              {"correct", a.correct},
              {"tp", a.true_positives},
              {"fp", a.false_positives}};
    out << j.dump() << '\n';
}

MetricsReport read_report_jsonl(std::istream& in) {
    MetricsReport r;
    bool have_aggregate = false;
    std::string line;
    int lineno = 0;
    auto opt = [](const json& v) -> std::optional<double> {
        if (v.is_null()) return std::nullopt;
        return v.get<double>();
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
            const auto type = j.at("type").get<std::string>();
            if (type == "clip") {
                ClipMetrics c;
                c.clip_id = j.at("clip_id").get<std::string>();
                c.dice = j.at("dice").get<double>();
                c.true_positives = j.at("tp").get<int>();
                c.false_positives = j.at("fp").get<int>();
                c.precision = opt(j.at("precision"));
                c.gt_fire = j.at("gt_fire").get<bool>();
                c.pred_fire = j.at("pred_fire").get<bool>();
                c.gt_spots = j.at("gt_spots").get<int>();
                c.matched_spots = j.at("matched_spots").get<int>();
                r.clips.push_back(std::move(c));
            } else if (type == "aggregate") {
                auto& a = r.aggregate;
                a.n_clips = j.at("n_clips").get<int>();
                a.mean_dice = j.at("mean_dice").get<double>();
                a.precision = opt(j.at("precision"));
                a.precision_clips = j.at("precision_clips").get<int>();
                a.accuracy = j.at("accuracy").get<double>();
                a.correct = j.at("correct").get<int>();
                a.true_positives = j.at("tp").get<int>();
                a.false_positives = j.at("fp").get<int>();
                have_aggregate = true;
            } else {
                throw InputError("unknown record type '" + type + "'");
            }
        } catch (const json::exception& e) {
            throw InputError("metrics report line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!have_aggregate) throw InputError("metrics report has no aggregate record");
    return r;
}

std::string format_report_table(const MetricsReport& report) {
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-28s %8s %4s %4s %10s %8s %8s\n", "clip", "dice", "tp", "fp", "precision",
                  "gt", "pred");
    os << buf;
    for (const auto& c : report.clips) {
        const std::string prec = c.precision ? std::to_string(*c.precision).substr(0, 6) : "n/a";
        std::snprintf(buf, sizeof buf, "%-28s %8.4f %4d %4d %10s %8s %8s\n", c.clip_id.c_str(), c.dice,
                      c.true_positives, c.false_positives, prec.c_str(), c.gt_fire ? "fire" : "none",
                      c.pred_fire ? "fire" : "none");
        os << buf;
    }
    const auto& a = report.aggregate;
    os << "----\n";
    std::snprintf(buf, sizeof buf, "clips %d  mean dice %.2f%%  precision %s  accuracy %.2f%% (%d/%d)\n", a.n_clips,
                  100.0 * a.mean_dice,
                  a.precision ? (std::to_string(100.0 * *a.precision).substr(0, 6) + "%").c_str() : "n/a",
                  100.0 * a.accuracy, a.correct, a.n_clips);
    os << buf;
    return os.str();
}

}  // namespace smolder
