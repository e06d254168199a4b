#include "litho/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "litho/png_io.hpp"
#include "litho/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace litho {

const char* lithology_name(Lithology l) {
    switch (l) {
        case Lithology::Grainstone: return "grainstone";
        case Lithology::Spherulite: return "spherulite";
        case Lithology::Stromatolite: return "stromatolite";
    }
    return "?";
}

Lithology lithology_from_name(const std::string& name) {
    for (int i = 0; i < kNumClasses; ++i) {
        if (name == lithology_name(static_cast<Lithology>(i))) {
            return static_cast<Lithology>(i);
        }
    }
    throw std::invalid_argument("unknown lithology label \"" + name +
                                "\" (expected grainstone|spherulite|stromatolite)");
}

void DatasetManifest::validate() const {
    std::map<std::string, Lithology> labels;
    std::map<std::string, std::set<int>> slices;
    for (const ManifestRecord& r : records) {
        auto [it, inserted] = labels.emplace(r.plug_id, r.label);
        if (!inserted && it->second != r.label) {
            throw std::runtime_error("manifest: plug \"" + r.plug_id +
                                     "\" carries two different labels; all slices of a plug "
                                     "must share one lithology");
        }
        if (!slices[r.plug_id].insert(r.slice_index).second) {
            throw std::runtime_error("manifest: plug \"" + r.plug_id +
                                     "\" repeats slice index " + std::to_string(r.slice_index));
        }
    }
}

std::vector<std::string> DatasetManifest::plug_ids_in_order() const {
    std::vector<std::string> ids;
    std::set<std::string> seen;
    for (const ManifestRecord& r : records) {
        if (seen.insert(r.plug_id).second) {
            ids.push_back(r.plug_id);
        }
    }
    return ids;
}

Lithology DatasetManifest::plug_label(const std::string& plug_id) const {
    for (const ManifestRecord& r : records) {
        if (r.plug_id == plug_id) return r.label;
    }
    throw std::runtime_error("manifest: unknown plug \"" + plug_id + "\"");
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open manifest: " + path);
    }
    std::string line;
    if (!std::getline(in, line) || line != "plug_id,slice_index,path,label") {
        throw std::runtime_error("manifest " + path +
                                 ": expected header plug_id,slice_index,path,label");
    }
    DatasetManifest m;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string plug, slice, file, label;
        if (!std::getline(row, plug, ',') || !std::getline(row, slice, ',') ||
            !std::getline(row, file, ',') || !std::getline(row, label)) {
            throw std::runtime_error("manifest " + path + ": malformed line " +
                                     std::to_string(lineno));
        }
        ManifestRecord r;
        r.plug_id = plug;
        try {
            r.slice_index = std::stoi(slice);
        } catch (const std::exception&) {
            throw std::runtime_error("manifest " + path + ": bad slice index on line " +
                                     std::to_string(lineno));
        }
        r.path = file;
        r.label = lithology_from_name(label);
        m.records.push_back(std::move(r));
    }
    m.validate();
    return m;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open manifest for writing: " + path);
    }
    out << "plug_id,slice_index,path,label\n";
    for (const ManifestRecord& r : manifest.records) {
        out << r.plug_id << ',' << r.slice_index << ',' << r.path << ','
            << lithology_name(r.label) << '\n';
    }
}

ImageF64 image_from_png(const std::string& path) {
    const RawImage raw = read_png16(path);
    ImageF64 img;
    img.height = raw.height;
    img.width = raw.width;
    img.pixels.resize(raw.pixels.size());
    for (std::size_t i = 0; i < raw.pixels.size(); ++i) {
        img.pixels[i] = static_cast<double>(raw.pixels[i]) / 65535.0;
    }
    return img;
}

void image_to_png(const ImageF64& image, const std::string& path) {
    RawImage raw;
    raw.height = image.height;
    raw.width = image.width;
    raw.pixels.resize(image.pixels.size());
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
        const double v = std::clamp(image.pixels[i], 0.0, 1.0);
        raw.pixels[i] = static_cast<std::uint16_t>(std::lround(v * 65535.0));
    }
    write_png16(raw, path);
}

ImageF64 standardize(const ImageF64& image) {
    const std::size_t n = image.pixels.size();
    if (n == 0) {
        throw std::invalid_argument("standardize: empty image");
    }
    double mean = 0;
    for (double v : image.pixels) mean += v;
    mean /= static_cast<double>(n);
    double var = 0;
    for (double v : image.pixels) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double denom = std::sqrt(var) + 1e-8;

    ImageF64 out = image;
    for (double& v : out.pixels) {
        v = (v - mean) / denom;
    }
    return out;
}

ImageF64 resize_bilinear(const ImageF64& image, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) {
        throw std::invalid_argument("resize_bilinear: target size must be positive");
    }
    if (image.height < 1 || image.width < 1) {
        throw std::invalid_argument("resize_bilinear: empty source image");
    }
    ImageF64 out;
    out.height = out_h;
    out.width = out_w;
    out.pixels.resize(static_cast<std::size_t>(out_h) * out_w);

    const double sy = static_cast<double>(image.height) / out_h;
    const double sx = static_cast<double>(image.width) / out_w;

    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(image.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, image.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(image.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, image.width - 1);
            const double wx = fx - x0;

            const double* p = image.pixels.data();
            const std::size_t r0 = static_cast<std::size_t>(y0) * image.width;
            const std::size_t r1 = static_cast<std::size_t>(y1) * image.width;
            const double top = p[r0 + x0] * (1 - wx) + p[r0 + x1] * wx;
            const double bot = p[r1 + x0] * (1 - wx) + p[r1 + x1] * wx;
            out.pixels[static_cast<std::size_t>(y) * out_w + x] = top * (1 - wy) + bot * wy;
        }
    }
    return out;
}

Tensor image_to_tensor(const ImageF64& image) {
    return Tensor({1, image.height, image.width}, image.pixels);
}

std::vector<int> select_equally_spaced(int available, int n) {
    if (n < 1) {
        throw std::invalid_argument("select_equally_spaced: need n >= 1");
    }
    if (available < n) {
        throw std::invalid_argument("insufficient slices: have " + std::to_string(available) +
                                    ", need " + std::to_string(n));
    }
    std::vector<int> idx(static_cast<std::size_t>(n));
    if (n == 1) {
        idx[0] = 0;
        return idx;
    }
    for (int i = 0; i < n; ++i) {
        idx[static_cast<std::size_t>(i)] = static_cast<int>(
            std::llround(static_cast<double>(i) * (available - 1) / (n - 1)));
    }
    return idx;
}

int FoldPlan::fold_of(const std::string& plug_id) const {
    for (std::size_t f = 0; f < folds.size(); ++f) {
        for (const std::string& id : folds[f]) {
            if (id == plug_id) return static_cast<int>(f);
        }
    }
    return -1;
}

FoldPlan plan_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
    if (k < 2) {
        throw std::invalid_argument("plan_folds: need k >= 2");
    }
    manifest.validate();

    std::vector<std::vector<std::string>> by_class(kNumClasses);
    for (const std::string& id : manifest.plug_ids_in_order()) {
        by_class[static_cast<std::size_t>(manifest.plug_label(id))].push_back(id);
    }

    FoldPlan plan;
    plan.k = k;
    plan.seed = seed;
    plan.folds.assign(static_cast<std::size_t>(k), {});

    for (int cls = 0; cls < kNumClasses; ++cls) {
        auto& plugs = by_class[static_cast<std::size_t>(cls)];
        std::mt19937_64 rng(mix_seed(seed, 0xf01d0000ULL + static_cast<std::uint64_t>(cls)));
        std::shuffle(plugs.begin(), plugs.end(), rng);
        for (std::size_t i = 0; i < plugs.size(); ++i) {
            plan.folds[i % static_cast<std::size_t>(k)].push_back(plugs[i]);
        }
        const auto count = static_cast<int>(plugs.size());
        if (count < k) {
            plan.warnings.push_back(std::string(lithology_name(static_cast<Lithology>(cls))) +
                                    ": only " + std::to_string(count) + " plugs for " +
                                    std::to_string(k) + " folds; some folds miss this class");
        } else if (count % k != 0) {
            plan.warnings.push_back(std::string(lithology_name(static_cast<Lithology>(cls))) +
                                    ": " + std::to_string(count) +
                                    " plugs do not divide evenly into " + std::to_string(k) +
                                    " folds");
        }
    }

    for (int test = 0; test < k; ++test) {
        for (int val = 0; val < k; ++val) {
            if (val != test) {
                plan.runs.push_back({test, val});
            }
        }
    }
    return plan;
}

void save_fold_plan(const FoldPlan& plan, const std::string& path) {
    json j;
    j["k"] = plan.k;
    j["seed"] = plan.seed;
    j["folds"] = plan.folds;
    json runs = json::array();
    for (const FoldPlan::Run& r : plan.runs) {
        runs.push_back({r.test_fold, r.val_fold});
    }
    j["runs"] = runs;
    j["warnings"] = plan.warnings;
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open fold plan for writing: " + path);
    }
    out << j.dump(2) << '\n';
}

FoldPlan load_fold_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open fold plan: " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::runtime_error("fold plan " + path + ": corrupt JSON: " + e.what());
    }
    FoldPlan plan;
    plan.k = j.at("k").get<int>();
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
    for (const auto& r : j.at("runs")) {
        plan.runs.push_back({r.at(0).get<int>(), r.at(1).get<int>()});
    }
    if (j.contains("warnings")) {
        plan.warnings = j.at("warnings").get<std::vector<std::string>>();
    }
    if (static_cast<int>(plan.folds.size()) != plan.k) {
        throw std::runtime_error("fold plan " + path + ": fold list does not match k");
    }
    for (const FoldPlan::Run& r : plan.runs) {
        if (r.test_fold < 0 || r.test_fold >= plan.k || r.val_fold < 0 ||
            r.val_fold >= plan.k || r.test_fold == r.val_fold) {
            throw std::runtime_error("fold plan " + path + ": invalid run entry");
        }
    }
    return plan;
}

// ---------------------------------------------------------------------------
// synthetic texture generator

namespace {

struct Disc {
    double x, y;
};

// dart throwing with a minimum pairwise separation; gives blue-noise-ish
// placements without a full Poisson-disc grid
std::vector<Disc> throw_darts(std::mt19937_64& rng, int size, int target, double min_sep) {
    std::vector<Disc> out;
    const double sep2 = min_sep * min_sep;
    int attempts = 0;
    const int max_attempts = 200 + 100 * target;
    while (static_cast<int>(out.size()) < target && attempts < max_attempts) {
        ++attempts;
        const Disc d{uniform_real(rng, 0.0, size), uniform_real(rng, 0.0, size)};
        bool ok = true;
        for (const Disc& e : out) {
            const double dx = d.x - e.x, dy = d.y - e.y;
            if (dx * dx + dy * dy < sep2) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(d);
    }
    return out;
}

struct PlugParams {
    Lithology cls;
    // grainstone
    double grain_radius = 0, grain_amp = 0;
    int grain_count = 0;
    // spherulite
    double sph_radius = 0, sph_amp = 0;
    int sph_count = 0;
    // stromatolite
    double band_wavelength = 0, band_amp = 0, warp_amp = 0, warp_wavelength = 0;
    // shared
    double background = 0;
};

PlugParams draw_plug_params(Lithology cls, int size, std::mt19937_64& rng) {
    PlugParams p;
    p.cls = cls;
    const double s = size;
    switch (cls) {
        case Lithology::Grainstone: {
            p.background = uniform_real(rng, 0.22, 0.32);
            p.grain_radius = uniform_real(rng, 0.045, 0.065) * s;
            p.grain_amp = uniform_real(rng, 0.5, 0.65);
            const double coverage = uniform_real(rng, 0.28, 0.38);
            p.grain_count = std::max(
                4, static_cast<int>(coverage * s * s / (M_PI * p.grain_radius * p.grain_radius)));
            break;
        }
        case Lithology::Spherulite: {
            p.background = uniform_real(rng, 0.28, 0.38);
            p.sph_radius = uniform_real(rng, 0.14, 0.20) * s;
            p.sph_amp = uniform_real(rng, 0.45, 0.60);
            const double coverage = uniform_real(rng, 0.40, 0.55);
            p.sph_count = std::max(
                2, static_cast<int>(coverage * s * s / (M_PI * p.sph_radius * p.sph_radius)));
            break;
        }
        case Lithology::Stromatolite: {
            p.background = uniform_real(rng, 0.35, 0.45);
            p.band_wavelength = uniform_real(rng, 0.11, 0.18) * s;
            p.band_amp = uniform_real(rng, 0.18, 0.28);
            p.warp_amp = uniform_real(rng, 0.02, 0.06) * s;
            p.warp_wavelength = uniform_real(rng, 0.6, 1.2) * s;
            break;
        }
    }
    return p;
}

ImageF64 render_slice(const PlugParams& p, int size, std::mt19937_64& rng) {
    ImageF64 img;
    img.height = size;
    img.width = size;
    img.pixels.assign(static_cast<std::size_t>(size) * size, p.background);
    double* px = img.pixels.data();

    auto stamp_discs = [&](double radius, double amp, int count, double min_sep, bool cone) {
        const std::vector<Disc> discs = throw_darts(rng, size, count, min_sep);
        for (const Disc& d : discs) {
            const int x0 = std::max(0, static_cast<int>(d.x - radius) - 1);
            const int x1 = std::min(size - 1, static_cast<int>(d.x + radius) + 1);
            const int y0 = std::max(0, static_cast<int>(d.y - radius) - 1);
            const int y1 = std::min(size - 1, static_cast<int>(d.y + radius) + 1);
            for (int y = y0; y <= y1; ++y) {
                for (int x = x0; x <= x1; ++x) {
                    const double dx = x - d.x, dy = y - d.y;
                    const double r = std::sqrt(dx * dx + dy * dy) / radius;
                    if (r >= 1.0) continue;
                    // cone: bright center with a linear radial gradient;
                    // bump: compact quartic grain profile
                    const double v = cone ? amp * (1.0 - r)
                                          : amp * (1.0 - r * r) * (1.0 - r * r);
                    px[static_cast<std::size_t>(y) * size + x] += v;
                }
            }
        }
    };

    switch (p.cls) {
        case Lithology::Grainstone:
            stamp_discs(p.grain_radius, p.grain_amp, p.grain_count, 2.1 * p.grain_radius, false);
            break;
        case Lithology::Spherulite:
            stamp_discs(p.sph_radius, p.sph_amp, p.sph_count, 1.8 * p.sph_radius, true);
            break;
        case Lithology::Stromatolite: {
            const double phase = uniform_real(rng, 0.0, 2.0 * M_PI);
            const double warp_phase = uniform_real(rng, 0.0, 2.0 * M_PI);
            for (int y = 0; y < size; ++y) {
                for (int x = 0; x < size; ++x) {
                    const double warp =
                        p.warp_amp * std::sin(2.0 * M_PI * x / p.warp_wavelength + warp_phase);
                    px[static_cast<std::size_t>(y) * size + x] +=
                        p.band_amp *
                        std::sin(2.0 * M_PI * (y + warp) / p.band_wavelength + phase);
                }
            }
            break;
        }
    }

    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        px[i] = std::clamp(px[i] + 0.015 * gaussian(rng), 0.0, 1.0);
    }
    return img;
}

}  // namespace

DatasetManifest synth_generate(const SynthConfig& cfg, const std::string& out_dir) {
    if (cfg.image_size < 32) {
        throw std::invalid_argument("synth_generate: image size must be >= 32 (the variable-"
                                    "input models' floor), got " +
                                    std::to_string(cfg.image_size));
    }
    if (cfg.plugs_per_class < 1 || cfg.slices_per_plug < 1) {
        throw std::invalid_argument("synth_generate: plugs and slices must be >= 1");
    }

    fs::create_directories(fs::path(out_dir) / "images");

    DatasetManifest manifest;
    char name[128];
    for (int cls = 0; cls < kNumClasses; ++cls) {
        const Lithology label = static_cast<Lithology>(cls);
        for (int plug = 0; plug < cfg.plugs_per_class; ++plug) {
            const std::uint64_t plug_seed =
                mix_seed(cfg.seed, static_cast<std::uint64_t>(cls) * 4096 +
                                       static_cast<std::uint64_t>(plug));
            std::mt19937_64 plug_rng(plug_seed);
            const PlugParams params = draw_plug_params(label, cfg.image_size, plug_rng);

            std::snprintf(name, sizeof(name), "%s_p%02d", lithology_name(label), plug);
            const std::string plug_id = name;

            for (int slice = 0; slice < cfg.slices_per_plug; ++slice) {
                std::mt19937_64 slice_rng(
                    mix_seed(plug_seed, 0x51eceULL + static_cast<std::uint64_t>(slice)));
                const ImageF64 img = render_slice(params, cfg.image_size, slice_rng);

                std::snprintf(name, sizeof(name), "images/%s_s%03d.png", plug_id.c_str(), slice);
                image_to_png(img, (fs::path(out_dir) / name).string());

                ManifestRecord rec;
                rec.plug_id = plug_id;
                rec.slice_index = slice;
                rec.path = name;
                rec.label = label;
                manifest.records.push_back(std::move(rec));
            }
        }
    }
    write_manifest(manifest, (fs::path(out_dir) / "manifest.csv").string());
    return manifest;
}

}  // namespace litho
