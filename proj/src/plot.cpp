#include "llie/plot.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <sstream>

#include "llie/errors.hpp"
#include "llie/image_io.hpp"

namespace llie {

std::vector<LossLog> read_loss_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != LossLog::csv_header()) {
        throw IoError(path.string() + " is not a loss CSV");
    }
    std::vector<LossLog> logs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        LossLog l;
        char sep = 0;
        row >> l.step >> sep >> l.appearance >> sep >> l.structure >> sep >> l.generator >> sep >> l.discriminator >>
            sep >> l.enhancement >> sep >> l.total;
        if (!row) throw IoError("malformed row in " + path.string() + ": " + line);
        logs.push_back(l);
    }
    return logs;
}

namespace {

using Rgb = std::array<unsigned char, 3>;

class Canvas {
public:
    Canvas(int w, int h) : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3, 255) {}

    void set(int x, int y, const Rgb& c) {
        if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
        std::copy(c.begin(), c.end(), px_.begin() + (static_cast<std::size_t>(y) * w_ + x) * 3);
    }

    void line(int x0, int y0, int x1, int y1, const Rgb& c) {
        const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
        const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
        int err = dx + dy;
        while (true) {
            set(x0, y0, c);
            if (x0 == x1 && y0 == y1) break;
            const int e2 = 2 * err;
            if (e2 >= dy) {
                err += dy;
                x0 += sx;
            }
            if (e2 <= dx) {
                err += dx;
                y0 += sy;
            }
        }
    }

    void rect(int x0, int y0, int x1, int y1, const Rgb& c) {
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) set(x, y, c);
        }
    }

    const std::vector<unsigned char>& pixels() const { return px_; }

private:
    int w_, h_;
    std::vector<unsigned char> px_;
};

}  // namespace

void plot_loss_curves(const std::vector<LossLog>& logs, const std::filesystem::path& png, int width, int height) {
    if (width < 64 || height < 64) throw UsageError("plot must be at least 64x64");
    Canvas canvas(width, height);
    const int left = 40, right = width - 20, top = 20, bottom = height - 30;
    const Rgb axis{0, 0, 0}, grid{225, 225, 225};
    for (int k = 1; k <= 4; ++k) {
        const int y = bottom - (bottom - top) * k / 4;
        canvas.line(left, y, right, y, grid);
    }
    canvas.line(left, top, left, bottom, axis);
    canvas.line(left, bottom, right, bottom, axis);

    struct Series {
        double LossLog::*field;
        Rgb color;
    };
    const Series series[] = {{&LossLog::appearance, {31, 119, 180}},  {&LossLog::enhancement, {44, 160, 44}},
                             {&LossLog::structure, {255, 127, 14}},   {&LossLog::generator, {148, 103, 189}},
                             {&LossLog::discriminator, {214, 39, 40}}, {&LossLog::total, {0, 0, 0}}};
    for (std::size_t i = 0; i < std::size(series); ++i) {
        const int x = right - 12 * static_cast<int>(std::size(series) - i);
        canvas.rect(x, 6, x + 8, 12, series[i].color);
    }
    if (logs.empty()) {
        write_png_rgb8(png, width, height, canvas.pixels());
        return;
    }

    double ymax = 0.0;
    for (const LossLog& l : logs) {
        for (const Series& s : series) {
            if (std::isfinite(l.*s.field)) ymax = std::max(ymax, l.*s.field);
        }
    }
    if (ymax <= 0.0) ymax = 1.0;
    const double x_lo = static_cast<double>(logs.front().step);
    const double x_span = std::max(1.0, static_cast<double>(logs.back().step) - x_lo);
    auto px = [&](std::int64_t step) {
        return left + static_cast<int>(std::lround((step - x_lo) / x_span * (right - left)));
    };
    auto py = [&](double v) {
        const double t = std::clamp(std::isfinite(v) ? v / ymax : 1.0, 0.0, 1.0);
        return bottom - static_cast<int>(std::lround(t * (bottom - top)));
    };
    for (const Series& s : series) {
        for (std::size_t i = 1; i < logs.size(); ++i) {
            canvas.line(px(logs[i - 1].step), py(logs[i - 1].*s.field), px(logs[i].step), py(logs[i].*s.field),
                        s.color);
        }
        if (logs.size() == 1) canvas.set(px(logs[0].step), py(logs[0].*s.field), s.color);
    }
    write_png_rgb8(png, width, height, canvas.pixels());
}

}  // namespace llie
