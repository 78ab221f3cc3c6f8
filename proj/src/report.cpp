#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "opencity/experiments.hpp"

namespace opencity {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << content;
}

std::string svg_header(int w, int h, const std::string& title) {
    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
       << "\" viewBox=\"0 0 " << w << " " << h << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<text x=\"" << w / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"14\" "
          "font-family=\"sans-serif\">"
       << title << "</text>\n";
    return os.str();
}

std::string svg_histogram(const std::vector<double>& values, int bins, const std::string& title,
                          double lo = 0.0, double hi = 1.0) {
    const int W = 480, H = 320, ML = 48, MB = 36, MT = 32, MR = 16;
    std::vector<int> counts(static_cast<size_t>(bins), 0);
    for (double v : values) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        ++counts[static_cast<size_t>(b)];
    }
    const int maxc = std::max(1, *std::max_element(counts.begin(), counts.end()));
    std::ostringstream os;
    os << svg_header(W, H, title);
    const double bw = static_cast<double>(W - ML - MR) / bins;
    for (int b = 0; b < bins; ++b) {
        const double frac = static_cast<double>(counts[static_cast<size_t>(b)]) / maxc;
        const double bh = frac * (H - MT - MB);
        os << "<rect x=\"" << ML + b * bw << "\" y=\"" << H - MB - bh << "\" width=\"" << bw - 1
           << "\" height=\"" << bh << "\" fill=\"#4878a8\"/>\n";
    }
    os << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\""
       << H - MB << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double x = ML + t / 5.0 * (W - ML - MR);
        char label[16];
        std::snprintf(label, sizeof(label), "%.1f", lo + t / 5.0 * (hi - lo));
        os << "<text x=\"" << x << "\" y=\"" << H - MB + 16
           << "\" text-anchor=\"middle\" font-size=\"10\" font-family=\"sans-serif\">" << label
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_heatmap(const std::vector<double>& matrix, int n, const std::string& title) {
    const int W = 480, H = 500, M = 40;
    double maxv = 0.0;
    for (double v : matrix) maxv = std::max(maxv, v);
    if (maxv <= 0) maxv = 1.0;
    std::ostringstream os;
    os << svg_header(W, H, title);
    const double cell = static_cast<double>(W - 2 * M) / n;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double v = matrix[static_cast<size_t>(i) * n + j] / maxv;
            const int shade = static_cast<int>(255 - v * 215);
            os << "<rect x=\"" << M + j * cell << "\" y=\"" << M + i * cell << "\" width=\""
               << cell << "\" height=\"" << cell << "\" fill=\"rgb(" << shade << "," << shade
               << ",255)\"/>\n";
        }
    }
    os << "</svg>\n";
    return os.str();
}

std::string svg_scalability(const std::vector<std::pair<double, double>>& pts,
                            const std::string& title) {
    // log-log: x = agents, y = seconds per agent
    const int W = 480, H = 320, ML = 56, MB = 40, MT = 32, MR = 16;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& [x, y] : pts) {
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    if (pts.empty()) return svg_header(W, H, title) + "</svg>\n";
    auto lx = [&](double x) {
        return ML + (std::log10(x) - std::log10(xmin)) /
                        std::max(1e-9, std::log10(xmax) - std::log10(xmin)) * (W - ML - MR);
    };
    auto ly = [&](double y) {
        return H - MB - (std::log10(y) - std::log10(ymin)) /
                            std::max(1e-9, std::log10(ymax) - std::log10(ymin)) * (H - MT - MB);
    };
    std::ostringstream os;
    os << svg_header(W, H, title);
    os << "<polyline fill=\"none\" stroke=\"#a84848\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : pts) os << lx(x) << "," << ly(y) << " ";
    os << "\"/>\n";
    for (const auto& [x, y] : pts) {
        os << "<circle cx=\"" << lx(x) << "\" cy=\"" << ly(y) << "\" r=\"3\" fill=\"#a84848\"/>\n";
        char label[32];
        std::snprintf(label, sizeof(label), "%.3gs", y);
        os << "<text x=\"" << lx(x) << "\" y=\"" << ly(y) - 8
           << "\" text-anchor=\"middle\" font-size=\"10\" font-family=\"sans-serif\">" << label
           << "</text>\n";
    }
    os << "<line x1=\"" << ML << "\" y1=\"" << H - MB << "\" x2=\"" << W - MR << "\" y2=\""
       << H - MB << "\" stroke=\"black\"/>\n";
    for (const auto& [x, y] : pts) {
        char label[32];
        std::snprintf(label, sizeof(label), "%g", x);
        os << "<text x=\"" << lx(x) << "\" y=\"" << H - MB + 16
           << "\" text-anchor=\"middle\" font-size=\"10\" font-family=\"sans-serif\">" << label
           << "</text>\n";
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace

std::vector<std::string> emit_report(const RunRecord& run, ReportFormat format) {
    std::vector<std::string> written;
    const fs::path dir(run.dir);

    if (format == ReportFormat::json) {
        const std::string path = (dir / "report.json").string();
        write_file(path, run.report.to_json());
        written.push_back(path);
        return written;
    }

    if (format == ReportFormat::markdown) {
        std::ostringstream os;
        os << "# Run report\n\n";
        os << "| Time | Speedup | Rr | Tr |\n|---|---|---|---|\n";
        char row[160];
        std::snprintf(row, sizeof(row), "| %.3fs | %.1f | %.1f%% | %.1f%% |\n",
                      to_seconds(run.stats.wall_time), run.report.speedup, run.report.rr * 100.0,
                      run.report.tr * 100.0);
        os << row << "\n";
        os << "| Metric | Value |\n|---|---|\n";
        auto metric_row = [&](const char* name, double v) {
            char r[96];
            std::snprintf(r, sizeof(r), "| %s | %.6g |\n", name, v);
            os << r;
        };
        metric_row("R_MSE", run.report.r_mse);
        metric_row("OD_MSE", run.report.od_mse);
        metric_row("S_MSE", run.report.s_mse);
        metric_row("JSD mean", run.report.jsd_mean);
        metric_row("JSD std", run.report.jsd_std);
        metric_row("T1", run.report.t1);
        metric_row("requests", static_cast<double>(run.stats.requests_total));
        metric_row("tokens in", static_cast<double>(run.stats.tokens_in_total));
        metric_row("tokens out", static_cast<double>(run.stats.tokens_out_total));
        metric_row("connections created", static_cast<double>(run.stats.connections_created));
        const std::string path = (dir / "report.md").string();
        write_file(path, os.str());
        written.push_back(path);
        return written;
    }

    // svg plots
    const fs::path plots = dir / "plots";
    fs::create_directories(plots);

    if (!run.report.per_block_segregation.empty()) {
        const std::string path = (plots / "segregation_hist.svg").string();
        write_file(path, svg_histogram(run.report.per_block_segregation, 20,
                                       "Per-block income segregation"));
        written.push_back(path);
    }

    // counterfactual histograms when the run carries both distributions
    const fs::path cf = dir / "counterfactual.json";
    if (fs::exists(cf)) {
        std::ifstream in(cf);
        json j;
        in >> j;
        const auto orig = j.at("s_original").get<std::vector<double>>();
        const auto even = j.at("s_even").get<std::vector<double>>();
        const std::string p1 = (plots / "segregation_original.svg").string();
        const std::string p2 = (plots / "segregation_even.svg").string();
        write_file(p1, svg_histogram(orig, 20, "Income segregation: original homes"));
        write_file(p2, svg_histogram(even, 20, "Income segregation: even homes"));
        written.push_back(p1);
        written.push_back(p2);
    }

    // OD heat map from the written trajectories
    const fs::path trajs_path = dir / "trajs.jsonl";
    if (fs::exists(trajs_path) && !run.config.city.empty()) {
        try {
            const City city = run.config.load_city();
            std::ifstream in(trajs_path);
            std::ostringstream buf;
            buf << in.rdbuf();
            const auto trajs = trajectories_from_jsonl(buf.str(), city);
            const auto od = metrics::od_matrix(trajs, city);
            const std::string path = (plots / "od_heatmap.svg").string();
            write_file(path, svg_heatmap(od.normalized, od.n_blocks, "Normalized OD matrix"));
            written.push_back(path);
        } catch (const Error&) {
            // city unavailable; skip the map
        }
    }

    const fs::path scal = dir / "scalability.json";
    if (fs::exists(scal)) {
        std::ifstream in(scal);
        json j;
        in >> j;
        std::vector<std::pair<double, double>> pts;
        for (const auto& row : j) {
            pts.emplace_back(row.at("agents").get<double>(),
                             row.at("seconds_per_agent").get<double>());
        }
        const std::string path = (plots / "scalability.svg").string();
        write_file(path, svg_scalability(pts, "Virtual seconds per agent"));
        written.push_back(path);
    }

    return written;
}

}  // namespace opencity
