#pragma once

#include "lvdiag/tensor/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace lvdiag::phantom {

/// Diagnosis label. Positive class is TTS-like.
enum class Label : int { stemi = 0, tts = 1 };

struct PhantomConfig {
    std::size_t frames = 16;
    std::size_t height = 64;
    std::size_t width = 64;
    double tts_fraction = 140.0 / 300.0;  ///< fraction of label-1 cases
    double speckle = 0.25;                ///< multiplicative speckle strength
    double artifact_probability = 0.0;    ///< chance of a static bright band per case
    std::uint64_t seed = 2024;

    /// Throws std::invalid_argument when a bound is violated.
    void validate() const;
};

/// One synthetic echo: video in [0,1], binary cavity mask, both (T,H,W).
struct LabeledEcho {
    std::string id;
    std::uint64_t seed = 0;
    Label label = Label::stemi;
    Tensor video;
    Tensor mask;
};

/// Identity, seed and label of one dataset member, fixed before rendering.
struct CaseSpec {
    std::string id;
    std::uint64_t seed = 0;
    Label label = Label::stemi;
};

class PhantomError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Renders one case. Label tts: the apical half barely moves while the base
/// contracts strongly. Label stemi: the whole wall contracts except a frozen
/// basal-septal sector. Deterministic in (config, case_seed, label).
LabeledEcho generate_case(const PhantomConfig& config, std::uint64_t case_seed, Label label);

/// Case i gets seed derive_seed(config.seed, i) and id "case_%04d"; labels are a
/// seeded permutation holding round(n * tts_fraction) tts cases.
std::vector<CaseSpec> dataset_plan(const PhantomConfig& config, std::size_t n);

std::vector<LabeledEcho> generate_dataset(const PhantomConfig& config, std::size_t n);

/// v' = clamp(v * (1 + strength * g), 0, 1), g ~ N(0,1) i.i.d. per voxel.
Tensor add_speckle(const Tensor& video, double strength, std::uint64_t seed);

/// Writes cases/<id>/video.ltsr, cases/<id>/mask.ltsr and manifest.csv.
void write_dataset(const std::filesystem::path& dir, const std::vector<LabeledEcho>& cases);

struct ManifestRow {
    std::string id;
    Label label = Label::stemi;
    std::uint64_t seed = 0;
    std::size_t frames = 0, height = 0, width = 0;
};

std::vector<ManifestRow> read_manifest(const std::filesystem::path& csv);
void write_manifest(const std::filesystem::path& csv, const std::vector<ManifestRow>& rows);

/// Loads every case listed in manifest.csv, checking shapes against the manifest.
std::vector<LabeledEcho> read_dataset(const std::filesystem::path& dir);

} // namespace lvdiag::phantom
