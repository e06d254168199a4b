#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "litho/tensor.hpp"

namespace litho {

/// The three carbonate fabrics, in label order. Class indices are fixed by
/// this enumeration everywhere (confusion matrices, weights, reports).
enum class Lithology { Grainstone = 0, Spherulite = 1, Stromatolite = 2 };

constexpr int kNumClasses = 3;

const char* lithology_name(Lithology l);
Lithology lithology_from_name(const std::string& name);

struct ManifestRecord {
    std::string plug_id;
    int slice_index = 0;
    std::string path;  // relative to the manifest's directory
    Lithology label = Lithology::Grainstone;
};

/// Plug-grouped labeled slices. Loading enforces that all slices of one
/// plug carry the same label and that slice indices are unique per plug.
struct DatasetManifest {
    std::vector<ManifestRecord> records;

    void validate() const;
    std::vector<std::string> plug_ids_in_order() const;
    Lithology plug_label(const std::string& plug_id) const;
};

/// CSV with header `plug_id,slice_index,path,label`.
DatasetManifest read_manifest(const std::string& path);
void write_manifest(const DatasetManifest& manifest, const std::string& path);

/// Grayscale raster in floating point, intensities nominally in [0,1]
/// before standardization.
struct ImageF64 {
    int height = 0;
    int width = 0;
    std::vector<double> pixels;
};

ImageF64 image_from_png(const std::string& path);
void image_to_png(const ImageF64& image, const std::string& path);

/// Per-image standardization: (x - mean) / (std + 1e-8) with the population
/// standard deviation. Constant images map to all zeros.
ImageF64 standardize(const ImageF64& image);

/// Bilinear resampling with half-pixel centers: src = (dst + 0.5)*scale - 0.5,
/// edge-clamped.
ImageF64 resize_bilinear(const ImageF64& image, int out_h, int out_w);

/// 1xHxW tensor view of an image.
Tensor image_to_tensor(const ImageF64& image);

/// Indices round(i*(T-1)/(n-1)) for i in 0..n-1: first and last always
/// included, injective when T >= n. Throws when fewer than n slices exist.
std::vector<int> select_equally_spaced(int available, int n);

/// Plug-level nested k-fold plan: which fold owns each plug, and the
/// k*(k-1) (test fold, validation fold) run list.
struct FoldPlan {
    int k = 6;
    std::uint64_t seed = 0;
    std::vector<std::vector<std::string>> folds;  // fold -> plug ids
    struct Run {
        int test_fold = 0;
        int val_fold = 0;
    };
    std::vector<Run> runs;
    std::vector<std::string> warnings;  // class imbalance notes, not errors

    int fold_of(const std::string& plug_id) const;  // -1 when absent
};

/// Groups plugs by class, shuffles each class with the seed and deals
/// round-robin into k folds, then emits every (test, validation) pair.
FoldPlan plan_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

void save_fold_plan(const FoldPlan& plan, const std::string& path);
FoldPlan load_fold_plan(const std::string& path);

struct SynthConfig {
    int plugs_per_class = 6;
    int slices_per_plug = 20;
    int image_size = 64;
    std::uint64_t seed = 0;
};

/// Writes a synthetic three-class texture dataset (bright grains, radial
/// spherulites, warped laminations) under out_dir: 16-bit grayscale PNGs in
/// images/ plus manifest.csv. Plugs share a per-plug parameter draw; slices
/// vary by placement and noise. Byte-deterministic for a fixed seed.
DatasetManifest synth_generate(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace litho
