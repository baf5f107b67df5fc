#include "jscc/plots.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

#include "jscc/error.hpp"

namespace jscc {

namespace {

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

std::string series_label(const EvalRecord& r) {
    std::string s = r.protocol;
    if (r.lambda) s += " l=" + num(*r.lambda);
    if (r.protocol == "af" || r.protocol == "df" || r.protocol == "pf")
        s += " sr=" + (std::isinf(r.snr_sr_db) ? std::string("inf") : num(r.snr_sr_db)) + "dB";
    return s;
}

double metric_value(const EvalRecord& r, const std::string& metric) {
    if (metric == "psnr") return r.psnr;
    if (metric == "ssim") return r.ssim_val;
    throw ConfigError("unknown metric \"" + metric + "\" (expected psnr or ssim)");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open output file: " + path);
    return os;
}

}  // namespace

void write_records_tsv(const std::vector<EvalRecord>& records, const std::string& path) {
    auto os = open_out(path);
    os << "protocol\tlambda\tsnr_sr_db\tgamma_db\tn_images\tpsnr_db\tssim\tseed\tmodel_id\tflags\n";
    for (const auto& r : records) {
        os << r.protocol << '\t' << (r.lambda ? num(*r.lambda) : "-") << '\t'
           << (std::isinf(r.snr_sr_db) ? "inf" : num(r.snr_sr_db)) << '\t' << num(r.gamma_db)
           << '\t' << r.n_images << '\t' << num(r.psnr) << '\t' << num(r.ssim_val) << '\t'
           << r.seed << '\t' << r.model_id << '\t';
        for (size_t i = 0; i < r.flags.size(); ++i) os << (i ? "," : "") << r.flags[i];
        os << '\n';
    }
}

void write_metric_table(const std::vector<EvalRecord>& records, const std::string& metric,
                        const std::string& path) {
    std::map<std::string, std::map<double, double>> series;  // label -> gamma -> value
    std::set<double> gammas;
    for (const auto& r : records) {
        series[series_label(r)][r.gamma_db] = metric_value(r, metric);
        gammas.insert(r.gamma_db);
    }
    auto os = open_out(path);
    os << "gamma_db";
    for (const auto& [label, vals] : series) os << '\t' << label;
    os << '\n';
    for (double g : gammas) {
        os << num(g);
        for (const auto& [label, vals] : series) {
            auto it = vals.find(g);
            os << '\t' << (it == vals.end() ? "-" : num(it->second));
        }
        os << '\n';
    }
}

void write_metric_svg(const std::vector<EvalRecord>& records, const std::string& metric,
                      const std::string& path) {
    std::map<std::string, std::map<double, double>> series;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& r : records) {
        const double v = metric_value(r, metric);
        series[series_label(r)][r.gamma_db] = v;
        xmin = std::min(xmin, r.gamma_db);
        xmax = std::max(xmax, r.gamma_db);
        ymin = std::min(ymin, v);
        ymax = std::max(ymax, v);
    }
    if (series.empty()) throw ConfigError("no records to plot");
    if (xmax <= xmin) xmax = xmin + 1.0;
    const double pad = (ymax - ymin) > 0 ? 0.05 * (ymax - ymin) : 0.5;
    ymin -= pad;
    ymax += pad;

    const double kW = 760, kH = 480, kL = 64, kR = 220, kT = 28, kB = 52;
    const double pw = kW - kL - kR, ph = kH - kT - kB;
    const auto sx = [&](double x) { return kL + (x - xmin) / (xmax - xmin) * pw; };
    const auto sy = [&](double y) { return kT + (ymax - y) / (ymax - ymin) * ph; };
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                             "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

    auto os = open_out(path);
    char buf[256];
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"760\" height=\"480\" "
          "viewBox=\"0 0 760 480\" font-family=\"monospace\" font-size=\"12\">\n";
    os << "<rect width=\"760\" height=\"480\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof(buf),
                  "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" "
                  "stroke=\"black\"/>\n",
                  kL, kT, pw, ph);
    os << buf;

    for (int t = 0; t <= 4; ++t) {  // axis ticks
        const double xv = xmin + (xmax - xmin) * t / 4.0;
        const double yv = ymin + (ymax - ymin) * t / 4.0;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">%s</text>\n", sx(xv),
                      kT + ph + 18, num(xv).c_str());
        os << buf;
        std::snprintf(buf, sizeof(buf),
                      "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"end\">%s</text>\n", kL - 6,
                      sy(yv) + 4, num(yv).c_str());
        os << buf;
        std::snprintf(
            buf, sizeof(buf),
            "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"#dddddd\"/>\n", kL,
            sy(yv), kL + pw, sy(yv));
        os << buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.2f\" y=\"%.2f\" text-anchor=\"middle\">gamma (dB)</text>\n",
                  kL + pw / 2, kH - 14);
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"16\" y=\"%.2f\" transform=\"rotate(-90 16 %.2f)\" "
                  "text-anchor=\"middle\">%s</text>\n",
                  kT + ph / 2, kT + ph / 2, metric == "psnr" ? "PSNR (dB)" : "SSIM");
    os << buf;

    size_t si = 0;
    for (const auto& [label, vals] : series) {
        const char* color = palette[si % 8];
        std::string pts;
        for (const auto& [g, v] : vals) {
            std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", sx(g), sy(v));
            pts += buf;
        }
        os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
           << pts << "\"/>\n";
        for (const auto& [g, v] : vals) {
            std::snprintf(buf, sizeof(buf),
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2.5\" fill=\"%s\"/>\n", sx(g),
                          sy(v), color);
            os << buf;
        }
        const double ly = kT + 16 + 18 * static_cast<double>(si);
        std::snprintf(buf, sizeof(buf),
                      "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"%s\" "
                      "stroke-width=\"2\"/>\n",
                      kL + pw + 12, ly - 4, kL + pw + 34, ly - 4, color);
        os << buf;
        std::snprintf(buf, sizeof(buf), "<text x=\"%.2f\" y=\"%.2f\">%s</text>\n", kL + pw + 40,
                      ly, label.c_str());
        os << buf;
        ++si;
    }
    os << "</svg>\n";
}

}  // namespace jscc
