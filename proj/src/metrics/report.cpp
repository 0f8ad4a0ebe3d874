#include "devstab/error.hpp"
#include "devstab/metrics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace devstab {

namespace fs = std::filesystem;

namespace {

std::string fixed(double v, int digits = 6) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string xml_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

void write_text(const fs::path& path, const std::string& text, std::vector<std::string>& written) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
    written.push_back(path.string());
}

struct Series {
    std::string name;
    std::string color;
    std::vector<double> values;
};

/// Grouped vertical bar chart; values are drawn against a [0, y_max] axis.
std::string bar_chart(const std::string& title, const std::vector<std::string>& labels,
                      const std::vector<Series>& series, double y_max, const std::string& y_label) {
    const int width = 640, height = 360, left = 60, right = 20, top = 40, bottom = 80;
    const double plot_w = width - left - right;
    const double plot_h = height - top - bottom;
    std::ostringstream svg;
    svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
        << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
    svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    svg << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << xml_escape(title)
        << "</text>\n";
    svg << "<text x=\"14\" y=\"" << top + plot_h / 2 << "\" transform=\"rotate(-90 14 " << top + plot_h / 2
        << ")\" text-anchor=\"middle\">" << xml_escape(y_label) << "</text>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = y_max * t / 4.0;
        const double y = top + plot_h * (1.0 - t / 4.0);
        svg << "<line x1=\"" << left << "\" y1=\"" << fixed(y, 2) << "\" x2=\"" << width - right << "\" y2=\""
            << fixed(y, 2) << "\" stroke=\"#ddd\"/>\n";
        svg << "<text x=\"" << left - 4 << "\" y=\"" << fixed(y + 4, 2) << "\" text-anchor=\"end\">" << fixed(v, 2)
            << "</text>\n";
    }
    const std::size_t groups = labels.size();
    if (groups > 0 && !series.empty()) {
        const double group_w = plot_w / static_cast<double>(groups);
        const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
        for (std::size_t g = 0; g < groups; ++g) {
            for (std::size_t s = 0; s < series.size(); ++s) {
                const double v = std::min(series[s].values[g], y_max);
                const double h = y_max > 0 ? plot_h * v / y_max : 0.0;
                const double x = left + g * group_w + group_w * 0.1 + s * bar_w;
                svg << "<rect x=\"" << fixed(x, 2) << "\" y=\"" << fixed(top + plot_h - h, 2) << "\" width=\""
                    << fixed(bar_w, 2) << "\" height=\"" << fixed(h, 2) << "\" fill=\"" << series[s].color << "\"/>\n";
            }
            const double cx = left + (g + 0.5) * group_w;
            svg << "<text x=\"" << fixed(cx, 2) << "\" y=\"" << top + plot_h + 14 << "\" text-anchor=\"end\" transform=\"rotate(-35 "
                << fixed(cx, 2) << " " << top + plot_h + 14 << ")\">" << xml_escape(labels[g]) << "</text>\n";
        }
    }
    if (series.size() > 1) {
        for (std::size_t s = 0; s < series.size(); ++s) {
            const int y = top + static_cast<int>(s) * 14;
            svg << "<rect x=\"" << width - right - 150 << "\" y=\"" << y << "\" width=\"10\" height=\"10\" fill=\""
                << series[s].color << "\"/>\n";
            svg << "<text x=\"" << width - right - 136 << "\" y=\"" << y + 9 << "\">" << xml_escape(series[s].name)
                << "</text>\n";
        }
    }
    svg << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << width - right << "\" y2=\""
        << top + plot_h << "\" stroke=\"black\"/>\n";
    svg << "</svg>\n";
    return svg.str();
}

std::string class_label(int c, const std::vector<std::string>& names) {
    return c >= 0 && static_cast<std::size_t>(c) < names.size() ? names[c] : std::to_string(c);
}

} // namespace

std::vector<std::string> render_report(const InstabilityReport& report, const std::string& out_dir,
                                       const std::vector<std::string>& class_names) {
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());
    std::vector<std::string> written;

    {
        std::ostringstream csv;
        csv << "k,image_count,environment_count,unstable_count,all_correct_count,all_incorrect_count,overall_instability\n";
        if (report.image_count > 0)
            csv << report.k << ',' << report.image_count << ',' << report.environment_count << ',' << report.unstable_count
            << ',' << report.all_correct_count << ',' << report.all_incorrect_count << ','
            << fixed(report.overall_instability) << '\n';
        write_text(dir / "overall.csv", csv.str(), written);
    }
    std::vector<std::string> class_labels;
    std::vector<double> class_values;
    {
        std::ostringstream csv;
        csv << "class_index,class_name,images,unstable,instability\n";
        for (const auto& [c, stat] : report.per_class) {
            csv << c << ',' << csv_field(class_label(c, class_names)) << ',' << stat.images << ',' << stat.unstable
                << ',' << fixed(stat.fraction()) << '\n';
            class_labels.push_back(class_label(c, class_names));
            class_values.push_back(stat.fraction());
        }
        write_text(dir / "per_class.csv", csv.str(), written);
    }
    std::vector<std::string> env_labels;
    std::vector<double> env_values;
    {
        std::ostringstream csv;
        csv << "environment,accuracy\n";
        for (const auto& [env, acc] : report.per_env_accuracy) {
            csv << csv_field(env) << ',' << fixed(acc) << '\n';
            env_labels.push_back(env);
            env_values.push_back(acc);
        }
        write_text(dir / "per_env_accuracy.csv", csv.str(), written);
    }
    {
        std::ostringstream csv;
        csv << "env_a,env_b,instability\n";
        for (const auto& [pair, v] : report.pairwise) {
            csv << csv_field(pair.first) << ',' << csv_field(pair.second) << ',' << fixed(v) << '\n';
        }
        write_text(dir / "pairwise.csv", csv.str(), written);
    }
    const std::pair<const char*, const Histogram*> buckets[] = {{"stable_correct", &report.stable_correct},
                                                                {"stable_incorrect", &report.stable_incorrect},
                                                                {"unstable_correct", &report.unstable_correct},
                                                                {"unstable_incorrect", &report.unstable_incorrect}};
    {
        std::ostringstream csv;
        csv << "bucket,bin_lo,bin_hi,count\n";
        if (report.image_count > 0) {
            for (const auto& [name, hist] : buckets) {
                for (int b = 0; b < Histogram::kBins; ++b) {
                    csv << name << ',' << fixed(static_cast<double>(b) / Histogram::kBins, 1) << ','
                        << fixed(static_cast<double>(b + 1) / Histogram::kBins, 1) << ',' << hist->counts[b] << '\n';
                }
            }
        }
        write_text(dir / "confidence.csv", csv.str(), written);
    }

    const std::string suffix = " (top-" + std::to_string(report.k) + ")";
    write_text(dir / "per_class_instability.svg",
               bar_chart("Instability by class" + suffix, class_labels, {{"instability", "#d62728", class_values}}, 1.0,
                         "fraction of images"),
               written);
    write_text(dir / "per_env_accuracy.svg",
               bar_chart("Accuracy by environment" + suffix, env_labels, {{"accuracy", "#1f77b4", env_values}}, 1.0,
                         "accuracy"),
               written);
    {
        std::vector<std::string> bins;
        for (int b = 0; b < Histogram::kBins; ++b) bins.push_back(fixed(static_cast<double>(b) / Histogram::kBins, 1));
        static const char* kColors[] = {"#2ca02c", "#98df8a", "#d62728", "#ff9896"};
        std::vector<Series> series;
        double peak = 0.0;
        for (std::size_t i = 0; i < 4; ++i) {
            Series s{buckets[i].first, kColors[i], {}};
            const double total = static_cast<double>(buckets[i].second->total());
            for (int b = 0; b < Histogram::kBins; ++b) {
                const double v = total > 0 ? buckets[i].second->counts[b] / total : 0.0;
                s.values.push_back(v);
                peak = std::max(peak, v);
            }
            series.push_back(std::move(s));
        }
        write_text(dir / "confidence_histogram.svg",
                   bar_chart("Top-1 confidence, stable vs unstable" + suffix, bins, series, peak > 0 ? peak : 1.0,
                             "share of bucket"),
                   written);
    }
    return written;
}

} // namespace devstab
