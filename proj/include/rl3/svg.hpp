#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "rl3/util.hpp"

namespace rl3 {

/// Just enough SVG to render training curves and score bars without a
/// plotting dependency.
class SvgChart {
public:
    SvgChart(int width, int height, std::string title)
        : width_(width), height_(height), title_(std::move(title)) {}

    void add_line(const std::vector<double>& xs, const std::vector<double>& ys,
                  const std::string& label, const std::string& color) {
        lines_.push_back({xs, ys, label, color});
    }

    void add_bar(const std::string& label, double value, double error, const std::string& color) {
        bars_.push_back({label, value, error, color});
    }

    std::string render() const { return bars_.empty() ? render_lines() : render_bars(); }

private:
    struct Line {
        std::vector<double> xs, ys;
        std::string label, color;
    };
    struct Bar {
        std::string label;
        double value, error;
        std::string color;
    };

    static std::string num(double v) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.2f", v);
        return buf;
    }

    std::string header() const {
        std::ostringstream out;
        out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_ << "\" height=\""
            << height_ << "\" viewBox=\"0 0 " << width_ << " " << height_ << "\">\n";
        out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
        out << "<text x=\"" << width_ / 2 << "\" y=\"18\" text-anchor=\"middle\" "
            << "font-family=\"sans-serif\" font-size=\"14\">" << title_ << "</text>\n";
        return out.str();
    }

    std::string render_lines() const {
        double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
        bool first = true;
        for (const auto& line : lines_) {
            for (size_t i = 0; i < line.xs.size(); ++i) {
                if (first) {
                    xmin = xmax = line.xs[i];
                    ymin = ymax = line.ys[i];
                    first = false;
                }
                xmin = std::min(xmin, line.xs[i]);
                xmax = std::max(xmax, line.xs[i]);
                ymin = std::min(ymin, line.ys[i]);
                ymax = std::max(ymax, line.ys[i]);
            }
        }
        if (xmax == xmin) xmax = xmin + 1;
        if (ymax == ymin) ymax = ymin + 1;
        const double pad_l = 60, pad_r = 20, pad_t = 30, pad_b = 40;
        auto px = [&](double x) {
            return pad_l + (x - xmin) / (xmax - xmin) * (width_ - pad_l - pad_r);
        };
        auto py = [&](double y) {
            return height_ - pad_b - (y - ymin) / (ymax - ymin) * (height_ - pad_t - pad_b);
        };

        std::ostringstream out;
        out << header();
        out << "<line x1=\"" << pad_l << "\" y1=\"" << height_ - pad_b << "\" x2=\""
            << width_ - pad_r << "\" y2=\"" << height_ - pad_b
            << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        out << "<line x1=\"" << pad_l << "\" y1=\"" << pad_t << "\" x2=\"" << pad_l << "\" y2=\""
            << height_ - pad_b << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        for (int tick = 0; tick <= 4; ++tick) {
            const double y = ymin + (ymax - ymin) * tick / 4.0;
            out << "<text x=\"" << pad_l - 6 << "\" y=\"" << py(y) + 4
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">" << num(y)
                << "</text>\n";
            const double x = xmin + (xmax - xmin) * tick / 4.0;
            out << "<text x=\"" << px(x) << "\" y=\"" << height_ - pad_b + 16
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
                << num(x) << "</text>\n";
        }
        int legend_y = static_cast<int>(pad_t) + 12;
        for (const auto& line : lines_) {
            out << "<polyline fill=\"none\" stroke=\"" << line.color
                << "\" stroke-width=\"1.5\" points=\"";
            for (size_t i = 0; i < line.xs.size(); ++i)
                out << num(px(line.xs[i])) << "," << num(py(line.ys[i])) << " ";
            out << "\"/>\n";
            out << "<text x=\"" << width_ - pad_r - 4 << "\" y=\"" << legend_y
                << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\" fill=\""
                << line.color << "\">" << line.label << "</text>\n";
            legend_y += 14;
        }
        out << "</svg>\n";
        return out.str();
    }

    std::string render_bars() const {
        double ymin = 0.0, ymax = 0.0;
        for (const auto& bar : bars_) {
            ymin = std::min(ymin, bar.value - bar.error);
            ymax = std::max(ymax, bar.value + bar.error);
        }
        if (ymax == ymin) ymax = ymin + 1;
        const double pad_l = 60, pad_r = 20, pad_t = 30, pad_b = 60;
        auto py = [&](double y) {
            return height_ - pad_b - (y - ymin) / (ymax - ymin) * (height_ - pad_t - pad_b);
        };
        const double slot = (width_ - pad_l - pad_r) / std::max<size_t>(1, bars_.size());

        std::ostringstream out;
        out << header();
        out << "<line x1=\"" << pad_l << "\" y1=\"" << py(0.0) << "\" x2=\"" << width_ - pad_r
            << "\" y2=\"" << py(0.0) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
        for (size_t i = 0; i < bars_.size(); ++i) {
            const auto& bar = bars_[i];
            const double x = pad_l + slot * i + slot * 0.2;
            const double w = slot * 0.6;
            const double y0 = py(std::max(0.0, bar.value));
            const double h = std::abs(py(bar.value) - py(0.0));
            out << "<rect x=\"" << num(x) << "\" y=\"" << num(y0) << "\" width=\"" << num(w)
                << "\" height=\"" << num(h) << "\" fill=\"" << bar.color << "\"/>\n";
            if (bar.error > 0.0) {
                const double cx = x + w / 2;
                out << "<line x1=\"" << num(cx) << "\" y1=\"" << num(py(bar.value - bar.error))
                    << "\" x2=\"" << num(cx) << "\" y2=\"" << num(py(bar.value + bar.error))
                    << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
            }
            out << "<text x=\"" << num(x + w / 2) << "\" y=\"" << height_ - pad_b + 16
                << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"10\">"
                << bar.label << "</text>\n";
        }
        out << "</svg>\n";
        return out.str();
    }

    int width_, height_;
    std::string title_;
    std::vector<Line> lines_;
    std::vector<Bar> bars_;
};

}  // namespace rl3
