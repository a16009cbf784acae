#include "smolder/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

namespace smolder {
namespace {

const std::set<std::string> kImageExtensions = {".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff"};
const std::set<std::string> kVideoExtensions = {".mp4", ".avi", ".mov", ".mkv", ".m4v"};

std::string lower_ext(const fs::path& p) {
    std::string e = p.extension().string();
    std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
    return e;
}

cv::Mat imread_checked(const fs::path& path, int flags) {
    cv::Mat m = cv::imread(path.string(), flags);
    if (m.empty()) throw IngestionError("cannot read image " + path.string());
    return m;
}

void imwrite_checked(const fs::path& path, const cv::Mat& m) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), m)) throw Error("cannot write image " + path.string());
}

cv::Mat to_bgr8(const RgbFrame& frame) {
    cv::Mat m(frame.rows(), frame.cols(), CV_8UC3);
    for (int r = 0; r < frame.rows(); ++r)
        for (int c = 0; c < frame.cols(); ++c) {
            const Rgb& p = frame(r, c);
            auto q = [](float v) { return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)); };
            m.at<cv::Vec3b>(r, c) = {q(p.b), q(p.g), q(p.r)};
        }
    return m;
}

cv::Mat mask_to_mat(const BinaryMask& mask) {
    cv::Mat m(mask.rows(), mask.cols(), CV_8UC1);
    for (int r = 0; r < mask.rows(); ++r)
        for (int c = 0; c < mask.cols(); ++c) m.at<unsigned char>(r, c) = mask(r, c) ? 255 : 0;
    return m;
}

}  // namespace

std::vector<fs::path> list_frame_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw IngestionError("not a frames directory: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && kImageExtensions.count(lower_ext(entry.path()))) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    return files;
}

bool is_video_file(const fs::path& path) { return fs::is_regular_file(path) && kVideoExtensions.count(lower_ext(path)); }

RgbFrame read_rgb(const fs::path& path) {
    cv::Mat m = imread_checked(path, cv::IMREAD_COLOR);
    RgbFrame out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) {
            const auto& v = m.at<cv::Vec3b>(r, c);
            out(r, c) = {v[2] / 255.0f, v[1] / 255.0f, v[0] / 255.0f};
        }
    return out;
}

void write_rgb(const fs::path& path, const RgbFrame& frame) { imwrite_checked(path, to_bgr8(frame)); }

Grid<float> read_intensity(const fs::path& path) {
    cv::Mat m = imread_checked(path, cv::IMREAD_UNCHANGED);
    if (m.channels() == 3) cv::cvtColor(m, m, cv::COLOR_BGR2GRAY);
    else if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2GRAY);
    cv::Mat f;
    switch (m.depth()) {
        case CV_8U: m.convertTo(f, CV_32F, 1.0 / 255.0); break;
        case CV_16U: m.convertTo(f, CV_32F, 1.0 / 65535.0); break;
        case CV_32F:
        case CV_64F: {
            m.convertTo(f, CV_32F);
            double lo = 0.0, hi = 0.0;
            cv::minMaxLoc(f, &lo, &hi);
            if (!std::isfinite(lo) || !std::isfinite(hi)) throw IngestionError("non-finite IR values in " + path.string());
            if (hi > lo) f = (f - lo) / (hi - lo);
            else f = cv::Mat::zeros(f.size(), CV_32F);
            break;
        }
        default: throw IngestionError("unsupported IR pixel depth in " + path.string());
    }
    Grid<float> out(f.rows, f.cols);
    for (int r = 0; r < f.rows; ++r)
        for (int c = 0; c < f.cols; ++c) out(r, c) = std::clamp(f.at<float>(r, c), 0.0f, 1.0f);
    return out;
}

void write_intensity(const fs::path& path, const Grid<float>& frame) {
    cv::Mat m(frame.rows(), frame.cols(), CV_16UC1);
    for (int r = 0; r < frame.rows(); ++r)
        for (int c = 0; c < frame.cols(); ++c)
            m.at<std::uint16_t>(r, c) =
                static_cast<std::uint16_t>(std::lround(65535.0 * std::clamp(static_cast<double>(frame(r, c)), 0.0, 1.0)));
    imwrite_checked(path, m);
}

BinaryMask read_mask(const fs::path& path) {
    cv::Mat m = imread_checked(path, cv::IMREAD_GRAYSCALE);
    BinaryMask out(m.rows, m.cols);
    for (int r = 0; r < m.rows; ++r)
        for (int c = 0; c < m.cols; ++c) out(r, c) = m.at<unsigned char>(r, c) >= 128 ? 1 : 0;
    return out;
}

void write_mask(const fs::path& path, const BinaryMask& mask) { imwrite_checked(path, mask_to_mat(mask)); }

void write_probability(const fs::path& path, const Grid<float>& probs) {
    cv::Mat m(probs.rows(), probs.cols(), CV_8UC1);
    for (int r = 0; r < probs.rows(); ++r)
        for (int c = 0; c < probs.cols(); ++c)
            m.at<unsigned char>(r, c) =
                static_cast<unsigned char>(std::lround(255.0 * std::clamp(probs(r, c), 0.0f, 1.0f)));
    imwrite_checked(path, m);
}

void write_overlay(const fs::path& path, const RgbFrame& frame, const BinaryMask& prediction,
                   const BinaryMask* ground_truth) {
    cv::Mat canvas = to_bgr8(frame);
    auto draw = [&](const BinaryMask& mask, const cv::Scalar& color) {
        std::vector<std::vector<cv::Point>> contours;
        cv::findContours(mask_to_mat(mask), contours, cv::RETR_EXTERNAL, cv::CHAIN_APPROX_NONE);
        cv::drawContours(canvas, contours, -1, color, 1);
    };
    if (ground_truth) draw(*ground_truth, cv::Scalar(0, 255, 0));
    draw(prediction, cv::Scalar(0, 0, 255));
    imwrite_checked(path, canvas);
}

}  // namespace smolder
