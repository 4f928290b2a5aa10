#include "lvdiag/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace lvdiag::pipeline {
namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string opt(const std::optional<double>& v, const std::string& absent) { return v ? fixed(*v) : absent; }

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("report: cannot write " + path.string());
    os << text;
    if (!os) throw std::runtime_error("report: write failed for " + path.string());
}

std::string metric_cells(const Metrics& m) {
    return opt(m.sensitivity, "n/a") + " | " + opt(m.specificity, "n/a") + " | " + opt(m.f1, "n/a") + " | " +
           opt(m.accuracy, "n/a");
}

} // namespace

const std::vector<PublishedRow>& published_rows() {
    static const std::vector<PublishedRow> rows{
        {"DCNN (2D [SCI])", 0.67, 0.78, 0.69, 0.73},
        {"DCNN (2D [MCI])", 0.73, 0.77, 0.73, 0.75},
        {"RNN", 0.71, 0.79, 0.72, 0.75},
        {"DCNN (2D+t)", 0.79, 0.80, 0.78, 0.80},
        {"LV-SegNet + SVMC", 0.76, 0.84, 0.80, 0.80},
        {"LV-SegNet + MLP", 0.81, 0.79, 0.81, 0.80},
        {"LV-SegNet + RFC", 0.67, 0.75, 0.71, 0.71},
        {"LV-SegNet + FSR + SVMC", 0.76, 0.72, 0.75, 0.74},
        {"LV-SegNet + FSR + MLP", 0.75, 0.66, 0.73, 0.71},
        {"LV-SegNet + FSR + RFC", 0.58, 0.75, 0.57, 0.67},
        {"LV-SegNet + FSL + SVMC", 0.73, 0.82, 0.76, 0.78},
        {"LV-SegNet + FSL + MLP", 0.73, 0.87, 0.80, 0.81},
        {"LV-SegNet + FSL + RFC", 0.78, 0.85, 0.82, 0.82},
    };
    return rows;
}

void emit_report(const Report& report, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw std::runtime_error("report: cannot create " + dir.string() + ": " + ec.message());

    std::ostringstream csv;
    csv << "method,sensitivity,specificity,f1,accuracy,reduction,runtime_s\n";
    for (const VariantReport& v : report.variants) {
        const Metrics& m = v.metrics;
        csv << variant_name(v.variant) << ',' << opt(m.sensitivity, "") << ',' << opt(m.specificity, "") << ','
            << opt(m.f1, "") << ',' << opt(m.accuracy, "") << ',' << fixed(v.reduction) << ','
            << (v.runtime_s ? fixed(*v.runtime_s, 2) : "") << '\n';
    }
    write_file(dir / "report.csv", csv.str());

    std::ostringstream md;
    md << "# Diagnosis report\n\n";
    md << "Config fingerprint `" << report.fingerprint << "`, " << report.cases << " cases (" << report.positives
       << " positive, label 1).\n\n";
    md << "Held-out segmentation Dice per fold:";
    for (double d : report.segmentation_dice) md << ' ' << fixed(d);
    md << "\n\n## Pooled over folds\n\n";
    md << "| Method | Sensitivity | Specificity | F1-score | Accuracy | Reduction | TP | FP | TN | FN |\n";
    md << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const VariantReport& v : report.variants)
        md << "| " << variant_name(v.variant) << " | " << metric_cells(v.metrics) << " | " << fixed(v.reduction) << " | "
           << v.pooled.tp << " | " << v.pooled.fp << " | " << v.pooled.tn << " | " << v.pooled.fn << " |\n";

    md << "\n## Per fold\n\n";
    md << "| Method | Fold | Sensitivity | Specificity | F1-score | Accuracy | Features |\n";
    md << "|---|---|---|---|---|---|---|\n";
    for (const VariantReport& v : report.variants)
        for (std::size_t k = 0; k < v.folds.size(); ++k)
            md << "| " << variant_name(v.variant) << " | " << v.folds[k].fold << " | " << metric_cells(v.fold_metrics[k])
               << " | " << v.folds[k].feature_count << " |\n";

    md << "\n## Published reference, not reproduced\n\n";
    md << "Published numbers from a private clinical dataset, listed for context only.\n\n";
    md << "| Method | Sensitivity | Specificity | F1-score | Accuracy |\n";
    md << "|---|---|---|---|---|\n";
    for (const PublishedRow& r : published_rows())
        md << "| " << r.method << " | " << fixed(r.sensitivity, 2) << " | " << fixed(r.specificity, 2) << " | "
           << fixed(r.f1, 2) << " | " << fixed(r.accuracy, 2) << " |\n";
    write_file(dir / "report.md", md.str());
}

} // namespace lvdiag::pipeline
