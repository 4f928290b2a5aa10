#include "lvdiag/phantom.hpp"

#include "lvdiag/tensor/ltsr.hpp"

#include <fstream>
#include <sstream>

namespace lvdiag::phantom {
namespace {

constexpr const char* kManifestHeader = "id,label,seed,frames,height,width";

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

} // namespace

void write_manifest(const std::filesystem::path& csv, const std::vector<ManifestRow>& rows) {
    std::ofstream os(csv);
    if (!os) throw PhantomError("manifest: cannot write " + csv.string());
    os << kManifestHeader << '\n';
    for (const auto& r : rows)
        os << r.id << ',' << int(r.label) << ',' << r.seed << ',' << r.frames << ',' << r.height << ',' << r.width
           << '\n';
    if (!os) throw PhantomError("manifest: write failed for " + csv.string());
}

std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv) {
    std::ifstream is(csv);
    if (!is) throw PhantomError("manifest: cannot open " + csv.string());
    std::string line;
    if (!std::getline(is, line)) throw PhantomError("manifest: empty file " + csv.string());
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kManifestHeader) throw PhantomError("manifest: unexpected header '" + line + "'");
    std::vector<ManifestRow> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 6) throw PhantomError("manifest: line " + std::to_string(lineno) + " has " +
                                              std::to_string(f.size()) + " fields, expected 6");
        try {
            ManifestRow r;
            r.id = f[0];
            const int label = std::stoi(f[1]);
            if (label != 0 && label != 1) throw std::invalid_argument("label");
            r.label = Label(label);
            r.seed = std::stoull(f[2]);
            r.frames = std::stoul(f[3]);
            r.height = std::stoul(f[4]);
            r.width = std::stoul(f[5]);
            rows.push_back(std::move(r));
        } catch (const std::logic_error&) {
            throw PhantomError("manifest: malformed line " + std::to_string(lineno) + ": " + line);
        }
    }
    return rows;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledEcho>& cases) {
    std::vector<ManifestRow> rows;
    for (const auto& c : cases) {
        const auto case_dir = dir / "cases" / c.id;
        std::filesystem::create_directories(case_dir);
        save_ltsr(case_dir / "video.ltsr", c.video);
        save_ltsr(case_dir / "mask.ltsr", c.mask);
        rows.push_back({c.id, c.label, c.seed, c.video.dim(0), c.video.dim(1), c.video.dim(2)});
    }
    write_manifest(dir / "manifest.csv", rows);
}

std::vector<LabeledEcho> read_dataset(const std::filesystem::path& dir) {
    std::vector<LabeledEcho> cases;
    for (const auto& row : read_manifest(dir / "manifest.csv")) {
        LabeledEcho c;
        c.id = row.id;
        c.seed = row.seed;
        c.label = row.label;
        const auto case_dir = dir / "cases" / row.id;
        c.video = load_ltsr(case_dir / "video.ltsr");
        c.mask = load_ltsr(case_dir / "mask.ltsr");
        const Shape expected{row.frames, row.height, row.width};
        if (c.video.shape() != expected || c.mask.shape() != expected)
            throw PhantomError("dataset: case " + row.id + " video " + shape_str(c.video.shape()) + " / mask " +
                               shape_str(c.mask.shape()) + " disagree with manifest " + shape_str(expected));
        cases.push_back(std::move(c));
    }
    return cases;
}

} // namespace lvdiag::phantom
