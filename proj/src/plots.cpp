#include "maps/plots.hpp"

#include <algorithm>
#include <cmath>

#include "maps/error.hpp"

#ifdef MAPS_WITH_OPENCV
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#endif

namespace maps {

#ifdef MAPS_WITH_OPENCV
namespace {

const cv::Scalar kPalette[] = {{180, 90, 30}, {40, 40, 200}, {60, 150, 40}, {150, 60, 150}, {20, 140, 200}};

void save(const std::filesystem::path& png, const cv::Mat& canvas) {
  if (!cv::imwrite(png.string(), canvas)) throw IoError("cannot write image: " + png.string());
}

std::vector<double> smooth(const std::vector<double>& y, std::size_t window) {
  std::vector<double> out(y.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    acc += y[i];
    if (i >= window) acc -= y[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

}  // namespace

bool plots_available() { return true; }

void write_line_plot(const std::filesystem::path& png, const std::string& title, std::span<const Series> series) {
  const int w = 720, h = 420, left = 70, right = 20, top = 40, bottom = 50;
  cv::Mat canvas(h, w, CV_8UC3, cv::Scalar(255, 255, 255));
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x1 > x0)) { x0 -= 1; x1 += 1; }
  if (!(y1 > y0)) { y0 -= 0.5; y1 += 0.5; }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double x, double y) {
    return cv::Point(left + static_cast<int>((x - x0) / (x1 - x0) * (w - left - right)),
                     h - bottom - static_cast<int>((y - y0) / (y1 - y0) * (h - top - bottom)));
  };
  const cv::Scalar axis(60, 60, 60);
  cv::rectangle(canvas, cv::Point(left, top), cv::Point(w - right, h - bottom), axis, 1);
  for (int t = 0; t <= 4; ++t) {
    const double yv = y0 + (y1 - y0) * t / 4.0, xv = x0 + (x1 - x0) * t / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", yv);
    cv::putText(canvas, buf, cv::Point(4, px(x0, yv).y + 4), cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1, cv::LINE_AA);
    std::snprintf(buf, sizeof buf, "%.0f", xv);
    cv::putText(canvas, buf, cv::Point(px(xv, y0).x - 12, h - bottom + 18), cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1,
                cv::LINE_AA);
  }
  cv::putText(canvas, title, cv::Point(left, 25), cv::FONT_HERSHEY_SIMPLEX, 0.6, axis, 1, cv::LINE_AA);
  for (std::size_t k = 0; k < series.size(); ++k) {
    const auto& s = series[k];
    const cv::Scalar colour = kPalette[k % std::size(kPalette)];
    for (std::size_t i = 1; i < s.x.size() && i < s.y.size(); ++i) {
      if (std::isfinite(s.y[i - 1]) && std::isfinite(s.y[i])) {
        cv::line(canvas, px(s.x[i - 1], s.y[i - 1]), px(s.x[i], s.y[i]), colour, 2, cv::LINE_AA);
      }
    }
    if (s.x.size() == 1) cv::circle(canvas, px(s.x[0], s.y[0]), 3, colour, cv::FILLED);
    const cv::Point legend(w - right - 150, top + 18 + 18 * static_cast<int>(k));
    cv::line(canvas, legend, legend + cv::Point(20, 0), colour, 2);
    cv::putText(canvas, s.label, legend + cv::Point(26, 4), cv::FONT_HERSHEY_SIMPLEX, 0.45, axis, 1, cv::LINE_AA);
  }
  save(png, canvas);
}

void write_loss_curve(const std::filesystem::path& png, std::span<const StepLosses> losses, const std::string& stage) {
  Series src{"loss_src", {}, {}}, mt{"loss_mt", {}, {}}, mix{"loss_mix", {}, {}}, spl{"loss_spl", {}, {}};
  for (const auto& l : losses) {
    const double x = static_cast<double>(l.step);
    src.x.push_back(x);
    src.y.push_back(l.src);
    mt.x.push_back(x);
    mt.y.push_back(l.mt);
    mix.x.push_back(x);
    mix.y.push_back(l.mix);
    spl.x.push_back(x);
    spl.y.push_back(l.spl);
  }
  const std::size_t window = std::max<std::size_t>(1, losses.size() / 50);
  std::vector<Series> series;
  for (Series* s : {&src, &mt, &mix, &spl}) {
    if (std::any_of(s->y.begin(), s->y.end(), [](double v) { return v != 0.0; })) {
      s->y = smooth(s->y, window);
      series.push_back(std::move(*s));
    }
  }
  write_line_plot(png, stage + " losses", series);
}

void write_pck_curve(const std::filesystem::path& png, std::span<const EvalRecord> history) {
  Series avg{"pck_avg", {}, {}};
  for (const auto& r : history) {
    avg.x.push_back(static_cast<double>(r.step));
    avg.y.push_back(100.0 * r.pck.average);
  }
  const std::string stage = history.empty() ? std::string("run") : history.front().stage;
  write_line_plot(png, stage + " PCK (%)", std::span<const Series>(&avg, 1));
}

void write_keypoint_overlay(const std::filesystem::path& png, const Image& image, const KeypointSet& truth,
                            const KeypointSet& predicted, int scale) {
  if (image.empty() || scale < 1) throw InvalidArgument("overlay needs a non-empty image and scale >= 1");
  cv::Mat grey(image.height, image.width, CV_8UC1);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      grey.at<unsigned char>(y, x) = cv::saturate_cast<unsigned char>(std::lround(255.0 * image.at(0, y, x)));
    }
  }
  cv::Mat big, canvas;
  cv::resize(grey, big, cv::Size(), scale, scale, cv::INTER_NEAREST);
  cv::cvtColor(big, canvas, cv::COLOR_GRAY2BGR);
  auto at = [scale](const Keypoint& k) {
    return cv::Point(static_cast<int>(std::lround((k.x + 0.5) * scale)), static_cast<int>(std::lround((k.y + 0.5) * scale)));
  };
  const std::size_t k = std::min(truth.points.size(), predicted.points.size());
  for (std::size_t i = 0; i < k; ++i) {
    if (!truth.points[i].visible) continue;
    const cv::Point g = at(truth.points[i]), p = at(predicted.points[i]);
    cv::line(canvas, g, p, cv::Scalar(0, 200, 255), 1, cv::LINE_AA);
    cv::circle(canvas, g, scale, cv::Scalar(0, 200, 0), 2, cv::LINE_AA);
    cv::drawMarker(canvas, p, cv::Scalar(0, 0, 230), cv::MARKER_CROSS, 2 * scale, 2, cv::LINE_AA);
  }
  save(png, canvas);
}

#else

bool plots_available() { return false; }

namespace {
[[noreturn]] void unavailable() { throw ConfigError("plots requested but image output support was not built"); }
}  // namespace

void write_line_plot(const std::filesystem::path&, const std::string&, std::span<const Series>) { unavailable(); }
void write_loss_curve(const std::filesystem::path&, std::span<const StepLosses>, const std::string&) { unavailable(); }
void write_pck_curve(const std::filesystem::path&, std::span<const EvalRecord>) { unavailable(); }
void write_keypoint_overlay(const std::filesystem::path&, const Image&, const KeypointSet&, const KeypointSet&, int) {
  unavailable();
}

#endif

}  // namespace maps
