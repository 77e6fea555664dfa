#include "nkem/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

#include "nkem/eval.hpp"
#include "nkem/kernel.hpp"
#include "nkem/phantom.hpp"
#include "nkem/projector.hpp"
#include "nkem/recon.hpp"
#include "nkem/rng.hpp"
#include "nkem/simulate.hpp"
#include "nkem/unet.hpp"

namespace nkem {
namespace {

namespace fs = std::filesystem;

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error("pipeline: " + msg); }

std::string zpad(int v, int width) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%0*d", width, v);
    return buf;
}

std::string rtag(int r) { return "r" + zpad(r, 2); }
std::string ftag(int m) { return "f" + zpad(m, 3); }

std::string timestamp_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

fs::path study_dir_rel(int r) { return fs::path("study_" + rtag(r)); }
fs::path composites_dir_rel(int r) { return fs::path("composites_" + rtag(r)); }
std::string kernel_stem_rel(int r) { return "kernel_" + rtag(r); }
fs::path recon_dir_rel(const std::string& method) { return fs::path("recon_" + method); }

// Seed streams: keep every consumer of the base seed on a distinct index.
std::uint64_t study_seed(const ExperimentConfig& x, int r) {
    return derive_seed(x.seed, 1000 + static_cast<std::uint64_t>(r));
}
std::uint64_t net_seed(const ExperimentConfig& x, int method_index, int r, int m) {
    return derive_seed(x.seed, 2000 + static_cast<std::uint64_t>(method_index) * 100000 +
                                   static_cast<std::uint64_t>(r) * 1000 +
                                   static_cast<std::uint64_t>(m));
}

/// Writes <rel>.f64 raw data plus a <rel-with-.meta> sidecar and registers
/// both. extra carries stage-specific metadata (frame, method, iteration).
void write_image_file(RunManifest& man, const fs::path& rel, const std::vector<double>& data,
                      const Grid& grid, const std::string& units,
                      const std::vector<std::pair<std::string, std::string>>& extra) {
    require(data.size() == grid.num_pixels(), "write_image_file: size mismatch");
    const fs::path abs = man.dir() / rel;
    if (abs.has_parent_path()) fs::create_directories(abs.parent_path());
    write_raw_f64(abs, data);
    KvFile meta;
    meta.set("kind", "image");
    meta.set_i64("nx", grid.nx);
    meta.set_i64("ny", grid.ny);
    meta.set_i64("nz", grid.nz);
    meta.set_f64("pixel_size", grid.pixel_size);
    meta.set("units", units);
    for (const auto& [k, v] : extra) meta.set(k, v);
    fs::path meta_rel = rel;
    meta_rel.replace_extension(".meta");
    meta.save(man.dir() / meta_rel);
    man.add_file(rel);
    man.add_file(meta_rel);
}

std::vector<double> read_image_file(const fs::path& path, const Grid& grid,
                                    const std::string& stage_hint) {
    if (!fs::exists(path)) {
        fail("missing '" + path.string() + "' — run the " + stage_hint + " stage first");
    }
    return read_raw_f64(path, grid.num_pixels());
}

fs::path truth_rel(int m) { return fs::path("truth_" + ftag(m) + ".f64"); }

std::vector<Image> load_truth_frames(const fs::path& out_dir, const ExperimentConfig& x) {
    std::vector<Image> truth;
    for (int m = 0; m < x.schedule.n_frames(); ++m) {
        truth.push_back(Image(read_image_file(out_dir / truth_rel(m), x.grid, "phantom")));
    }
    return truth;
}

Phantom load_phantom(const fs::path& out_dir, const ExperimentConfig& x) {
    const std::vector<double> raw =
        read_image_file(out_dir / "phantom_labels.f64", x.grid, "phantom");
    Phantom ph;
    ph.grid = x.grid;
    ph.label_map.reserve(raw.size());
    for (double v : raw) {
        const int lab = static_cast<int>(v);
        require(lab >= 0 && lab < kNumRegions && static_cast<double>(lab) == v,
                "phantom_labels.f64: corrupt label value");
        ph.label_map.push_back(lab);
    }
    return ph;
}

DynamicStudy load_study_checked(const fs::path& out_dir, int r) {
    const fs::path dir = out_dir / study_dir_rel(r);
    if (!fs::exists(dir / "study.manifest")) {
        fail("missing study directory '" + dir.string() + "' — run the simulate stage first");
    }
    return load_study(dir);
}

std::vector<Image> load_composites(const fs::path& out_dir, const ExperimentConfig& x, int r) {
    const std::size_t n = x.kernel.composite_ends_s.size();
    if (n == 0) fail("kernel.composite_ends is not set; composite frames are undefined");
    std::vector<Image> comps;
    for (std::size_t w = 0; w < n; ++w) {
        const fs::path p =
            out_dir / composites_dir_rel(r) / ("comp_" + zpad(static_cast<int>(w), 2) + ".f64");
        comps.push_back(Image(read_image_file(p, x.grid, "build-kernel")));
    }
    return comps;
}

KernelModel load_kernel_checked(const fs::path& out_dir, int r) {
    const fs::path stem = out_dir / kernel_stem_rel(r);
    fs::path nksm = stem;
    nksm += ".nksm";
    if (!fs::exists(nksm)) {
        fail("missing kernel '" + nksm.string() + "' — run the build-kernel stage first");
    }
    return load_kernel(stem);
}

int method_index(const std::string& method) {
    const auto& names = method_names();
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == method) return static_cast<int>(i);
    }
    fail("unknown method '" + method + "'");
}

std::string csv_field(double v) { return format_f64(v); }

/// Extracts transaxial slice z (row-major nx*ny block) for PGM export.
std::vector<double> image_slice(const std::vector<double>& data, const Grid& grid, int z) {
    const std::size_t plane = static_cast<std::size_t>(grid.nx) * static_cast<std::size_t>(grid.ny);
    const std::size_t off = plane * static_cast<std::size_t>(z);
    return std::vector<double>(data.begin() + static_cast<std::ptrdiff_t>(off),
                               data.begin() + static_cast<std::ptrdiff_t>(off + plane));
}

}  // namespace

const std::vector<std::string>& method_names() {
    static const std::vector<std::string> names = {"mlem", "kem", "neural-kem", "dip-ot",
                                                   "dip-admm"};
    return names;
}

bool is_method(const std::string& method) {
    const auto& names = method_names();
    return std::find(names.begin(), names.end(), method) != names.end();
}

bool method_needs_kernel(const std::string& method) {
    return method == "kem" || method == "neural-kem";
}

bool method_is_neural(const std::string& method) {
    return method == "neural-kem" || method == "dip-ot" || method == "dip-admm";
}

RunManifest RunManifest::open(const fs::path& out_dir, const Config& cfg) {
    fs::create_directories(out_dir);
    RunManifest man;
    man.dir_ = out_dir;
    const std::string hash = cfg.content_hash();
    const fs::path path = out_dir / "run.manifest";
    if (fs::exists(path)) {
        man.kv_ = KvFile::load(path);
        const std::string prev = man.kv_.get_or("config_hash", "");
        if (prev != hash) {
            fail("out-dir '" + out_dir.string() + "' was produced with a different config (hash " +
                 prev + ", current " + hash + ")");
        }
        const std::int64_t n = man.kv_.get_i64("n_files");
        for (std::int64_t i = 0; i < n; ++i) {
            man.file_set_.insert(man.kv_.get("file_" + zpad(static_cast<int>(i), 5)));
        }
    } else {
        man.kv_.set("tool", "nkem");
        man.kv_.set("version", kToolVersion);
        man.kv_.set("config_hash", hash);
        man.kv_.set_u64("seed", cfg.get_u64_or("simulation", "seed", 1));
        man.kv_.set_i64("n_files", 0);
    }
    const fs::path snap = out_dir / "config.snapshot.ini";
    if (!fs::exists(snap)) write_text_file(snap, cfg.serialize());
    man.add_file("config.snapshot.ini");
    man.save();
    return man;
}

void RunManifest::add_file(const fs::path& rel) {
    const std::string value = rel.generic_string();
    if (!file_set_.insert(value).second) return;
    const std::int64_t n = kv_.get_i64("n_files");
    kv_.set("file_" + zpad(static_cast<int>(n), 5), value);
    kv_.set_i64("n_files", n + 1);
}

void RunManifest::set(const std::string& key, const std::string& value) { kv_.set(key, value); }

void RunManifest::stage_done(const std::string& stage) {
    kv_.set("time_" + stage, timestamp_utc());
    save();
}

void RunManifest::save() const { kv_.save(dir_ / "run.manifest"); }

std::vector<std::string> RunManifest::files() const {
    std::vector<std::string> out;
    const std::int64_t n = kv_.get_i64("n_files");
    for (std::int64_t i = 0; i < n; ++i) {
        out.push_back(kv_.get("file_" + zpad(static_cast<int>(i), 5)));
    }
    return out;
}

std::vector<std::string> orphan_files(const fs::path& out_dir) {
    const KvFile kv = KvFile::load(out_dir / "run.manifest");
    std::set<std::string> listed;
    const std::int64_t n = kv.get_i64("n_files");
    for (std::int64_t i = 0; i < n; ++i) {
        listed.insert(kv.get("file_" + zpad(static_cast<int>(i), 5)));
    }
    std::vector<std::string> orphans;
    for (const auto& entry : fs::recursive_directory_iterator(out_dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string rel = fs::relative(entry.path(), out_dir).generic_string();
        if (rel == "run.manifest") continue;
        if (listed.count(rel) == 0) orphans.push_back(rel);
    }
    std::sort(orphans.begin(), orphans.end());
    return orphans;
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    require(n >= 0, "parallel_for: negative job count");
    if (n == 0) return;
    if (threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            while (true) {
                const int i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

void cmd_phantom(const ExperimentConfig& x, const Config& cfg, const fs::path& out_dir) {
    RunManifest man = RunManifest::open(out_dir, cfg);

    const Phantom ph = make_phantom(x.grid, x.phantom);
    std::vector<double> labels;
    labels.reserve(ph.label_map.size());
    for (int lab : ph.label_map) labels.push_back(static_cast<double>(lab));
    write_image_file(man, "phantom_labels.f64", labels, x.grid, "region-label",
                     {{"kind", "labels"}});

    const std::vector<Image> frames = synthesize_frames(ph, x.tacs, x.schedule);
    for (int m = 0; m < x.schedule.n_frames(); ++m) {
        write_image_file(man, truth_rel(m), frames[static_cast<std::size_t>(m)].data, x.grid,
                         "activity",
                         {{"frame", std::to_string(m)},
                          {"t_start_s", format_f64(x.schedule.start_time(m))},
                          {"duration_s", format_f64(x.schedule.durations_s[static_cast<std::size_t>(m)])}});
    }
    man.stage_done("phantom");
}

void cmd_simulate(const ExperimentConfig& x, const Config& cfg, const fs::path& out_dir) {
    RunManifest man = RunManifest::open(out_dir, cfg);
    const std::vector<Image> truth = load_truth_frames(out_dir, x);
    const SparseMatrix p = build_system_matrix(x.grid, x.geom);

    for (int r = 0; r < x.n_realizations; ++r) {
        const DynamicStudy study =
            simulate_study(p, x.grid, x.geom, truth, x.schedule, x.background_fraction,
                           x.target_counts, study_seed(x, r));
        const fs::path rel = study_dir_rel(r);
        save_study(out_dir / rel, study);
        man.add_file(rel / "study.manifest");
        double total_counts = 0.0;
        for (int m = 0; m < study.n_frames(); ++m) {
            for (const char* stem : {"true", "noisefree", "noisy", "background"}) {
                man.add_file(rel / (std::string(stem) + "_" + zpad(m, 3) + ".f64"));
            }
            total_counts += sum(study.noisy_sinos[static_cast<std::size_t>(m)].data);
        }
        man.set("counts_" + rtag(r), format_f64(total_counts));
        man.set("scale_" + rtag(r), format_f64(study.scale));
    }
    man.stage_done("simulate");
}

void cmd_build_kernel(const ExperimentConfig& x, const Config& cfg, const fs::path& out_dir,
                      int threads) {
    RunManifest man = RunManifest::open(out_dir, cfg);
    if (x.kernel.composite_ends_s.empty()) {
        fail("kernel.composite_ends must be set to build composite frames");
    }
    const SparseMatrix p = build_system_matrix(x.grid, x.geom);

    struct Built {
        std::vector<Image> comps;
        FeatureSet features;
        KernelModel model;
    };
    std::vector<Built> built(static_cast<std::size_t>(x.n_realizations));
    std::vector<DynamicStudy> studies;
    for (int r = 0; r < x.n_realizations; ++r) studies.push_back(load_study_checked(out_dir, r));

    parallel_for(x.n_realizations, threads, [&](int r) {
        Built& b = built[static_cast<std::size_t>(r)];
        b.comps = composite_frames(studies[static_cast<std::size_t>(r)],
                                   x.kernel.composite_ends_s, p, x.kernel.composite_mlem_iters,
                                   x.kernel.composite_from_noisy);
        b.features = extract_features(b.comps, x.grid);
        if (x.kernel.k == 0) {
            b.model = KernelModel::identity(x.grid.num_pixels());
        } else {
            const auto nbrs = knn_search(b.features, x.kernel.k, x.kernel.window);
            b.model = build_kernel(b.features, nbrs, x.kernel.sigma, x.kernel.row_normalize);
            b.model.window = x.kernel.window;
        }
    });

    for (int r = 0; r < x.n_realizations; ++r) {
        const Built& b = built[static_cast<std::size_t>(r)];
        for (std::size_t w = 0; w < b.comps.size(); ++w) {
            write_image_file(
                man, composites_dir_rel(r) / ("comp_" + zpad(static_cast<int>(w), 2) + ".f64"),
                b.comps[w].data, x.grid, "activity",
                {{"kind", "composite"},
                 {"window_end_s", format_f64(x.kernel.composite_ends_s[w])},
                 {"realization", std::to_string(r)}});
        }
        save_kernel(out_dir / kernel_stem_rel(r), b.model, b.features);
        man.add_file(kernel_stem_rel(r) + ".nksm");
        man.add_file(kernel_stem_rel(r) + ".meta");
    }
    man.stage_done("build-kernel");
}

void cmd_recon(const ExperimentConfig& x, const Config& cfg, const fs::path& out_dir,
               const std::string& method, int threads) {
    const int mi = method_index(method);  // also rejects unknown names
    RunManifest man = RunManifest::open(out_dir, cfg);

    std::vector<DynamicStudy> studies;
    for (int r = 0; r < x.n_realizations; ++r) studies.push_back(load_study_checked(out_dir, r));
    const SparseMatrix p = build_system_matrix(x.grid, x.geom);

    std::vector<KernelModel> kernels;
    if (method_needs_kernel(method)) {
        for (int r = 0; r < x.n_realizations; ++r) kernels.push_back(load_kernel_checked(out_dir, r));
    }
    std::vector<Tensor> inputs;
    if (method_is_neural(method)) {
        for (int r = 0; r < x.n_realizations; ++r) {
            inputs.push_back(make_network_input(load_composites(out_dir, x, r), x.grid));
        }
    }

    int iters = 0;
    if (method == "mlem") iters = x.mlem.iters;
    if (method == "kem") iters = x.kem.iters;
    if (method == "neural-kem") iters = x.neural_kem.iters;
    if (method == "dip-ot") iters = x.dip_ot.iters;
    if (method == "dip-admm") iters = x.dip_admm.iters;
    const std::vector<int> cp_list = x.checkpoint_iters(iters);
    const std::set<int> cp_set(cp_list.begin(), cp_list.end());

    UNetDescriptor desc;
    if (method_is_neural(method)) {
        desc.in_channels = static_cast<int>(x.kernel.composite_ends_s.size());
        desc.scales = x.network.scales;
        desc.base_channels = x.network.base_channels;
        desc.three_d = x.grid.is_3d();
        desc.validate();
    }

    struct Job {
        int r = 0, m = 0;
        std::vector<IterRecord> trace;
        std::map<int, std::vector<double>> checkpoints;
        NetParams params;
        bool has_params = false;
    };
    const int n_frames = x.schedule.n_frames();
    std::vector<Job> jobs(static_cast<std::size_t>(x.n_realizations * n_frames));
    for (int r = 0; r < x.n_realizations; ++r) {
        for (int m = 0; m < n_frames; ++m) {
            jobs[static_cast<std::size_t>(r * n_frames + m)].r = r;
            jobs[static_cast<std::size_t>(r * n_frames + m)].m = m;
        }
    }

    parallel_for(static_cast<int>(jobs.size()), threads, [&](int ji) {
        Job& job = jobs[static_cast<std::size_t>(ji)];
        const DynamicStudy& study = studies[static_cast<std::size_t>(job.r)];
        const Sinogram& y = study.noisy_sinos[static_cast<std::size_t>(job.m)];
        const Sinogram& bg = study.background_sinos[static_cast<std::size_t>(job.m)];
        const IterCallback cb = [&](int it, const Image& img) {
            if (cp_set.count(it)) job.checkpoints[it] = img.data;
        };

        ReconResult res;
        if (method == "mlem") {
            res = run_mlem(p, y, bg, iters, nullptr, cb);
        } else if (method == "kem") {
            res = run_kem(p, kernels[static_cast<std::size_t>(job.r)], y, bg, iters, nullptr, cb);
        } else if (method == "neural-kem") {
            NeuralKemOptions opt;
            opt.outer_iters = iters;
            opt.subiters = x.neural_kem.subiters;
            opt.lr = x.neural_kem.lr;
            opt.guard_max_retries = x.neural_kem.guard_retries;
            opt.seed = net_seed(x, mi, job.r, job.m);
            res = run_neural_kem(p, kernels[static_cast<std::size_t>(job.r)],
                                 inputs[static_cast<std::size_t>(job.r)], desc, y, bg, opt, cb);
            job.has_params = true;
        } else if (method == "dip-ot") {
            NeuralKemOptions opt;
            opt.outer_iters = iters;
            opt.subiters = x.dip_ot.subiters;
            opt.lr = x.dip_ot.lr;
            opt.seed = net_seed(x, mi, job.r, job.m);
            res = run_dip_ot(p, inputs[static_cast<std::size_t>(job.r)], desc, y, bg, opt, cb);
            job.has_params = true;
        } else {
            DipAdmmOptions opt;
            opt.outer_iters = iters;
            opt.rho = x.dip_admm.rho;
            opt.recon_subiters = x.dip_admm.recon_subiters;
            opt.mse_subiters = x.dip_admm.mse_subiters;
            opt.lr = x.dip_admm.lr;
            opt.seed = net_seed(x, mi, job.r, job.m);
            res = run_dip_admm(p, inputs[static_cast<std::size_t>(job.r)], desc, y, bg, opt, cb);
            job.has_params = true;
        }
        job.trace = std::move(res.trace);
        if (job.has_params) job.params = std::move(res.params);
    });

    const fs::path rel_dir = recon_dir_rel(method);
    fs::create_directories(out_dir / rel_dir);
    for (const Job& job : jobs) {
        const std::string stem = rtag(job.r) + "_" + ftag(job.m);
        // The likelihood model estimates expected counts per unit activity
        // times scale*duration; divide that calibration back out so saved
        // images are activity concentration, directly comparable to truth.
        const double cal = studies[static_cast<std::size_t>(job.r)].scale *
                           x.schedule.durations_s[static_cast<std::size_t>(job.m)];
        for (const auto& [it, data] : job.checkpoints) {
            std::vector<double> act = data;
            for (double& v : act) v /= cal;
            write_image_file(man, rel_dir / (stem + "_iter" + zpad(it, 3) + ".f64"), act, x.grid,
                             "activity",
                             {{"method", method},
                              {"realization", std::to_string(job.r)},
                              {"frame", std::to_string(job.m)},
                              {"iteration", std::to_string(it)},
                              {"count_calibration", format_f64(cal)}});
        }
        const fs::path trace_rel = rel_dir / (stem + "_trace.csv");
        write_trace_csv(out_dir / trace_rel, job.trace);
        man.add_file(trace_rel);
        if (job.has_params) {
            const fs::path params_rel = rel_dir / (stem + "_params.nknp");
            save_params(out_dir / params_rel, job.params);
            man.add_file(params_rel);
        }
    }
    man.stage_done("recon-" + method);
}

void cmd_eval(const ExperimentConfig& x, const Config& cfg, const fs::path& out_dir) {
    RunManifest man = RunManifest::open(out_dir, cfg);
    const Phantom ph = load_phantom(out_dir, x);
    const std::vector<Image> truth = load_truth_frames(out_dir, x);

    std::vector<std::string> methods;
    for (const std::string& m : method_names()) {
        if (fs::exists(out_dir / recon_dir_rel(m))) methods.push_back(m);
    }
    if (methods.empty()) fail("no reconstruction outputs found — run the recon stage first");

    std::vector<RoiMask> rois;
    for (Region reg : x.eval.rois) rois.push_back(RoiMask::from_region(ph, reg));
    const RoiMask noise_roi = RoiMask::from_region(ph, x.eval.noise_roi);

    const auto method_iters = [&](const std::string& m) {
        if (m == "mlem") return x.mlem.iters;
        if (m == "kem") return x.kem.iters;
        if (m == "neural-kem") return x.neural_kem.iters;
        if (m == "dip-ot") return x.dip_ot.iters;
        return x.dip_admm.iters;
    };
    const auto checkpoint = [&](const std::string& m, int r, int f, int it) {
        const fs::path p = out_dir / recon_dir_rel(m) /
                           (rtag(r) + "_" + ftag(f) + "_iter" + zpad(it, 3) + ".f64");
        return Image(read_image_file(p, x.grid, "recon"));
    };

    fs::create_directories(out_dir / "eval");
    std::string mse = "method,realization,frame,iteration,mse_db\n";
    std::string roi_means = "method,realization,frame,roi,iteration,mean\n";
    std::string noise = "method,realization,frame,iteration,noise_sd\n";
    std::string bias_sd = "method,frame,roi,iteration,bias,sd\n";

    for (const std::string& m : methods) {
        const std::vector<int> its = x.checkpoint_iters(method_iters(m));
        for (int r = 0; r < x.n_realizations; ++r) {
            for (int f = 0; f < x.schedule.n_frames(); ++f) {
                for (int it : its) {
                    const Image img = checkpoint(m, r, f, it);
                    mse += m + "," + std::to_string(r) + "," + std::to_string(f) + "," +
                           std::to_string(it) + "," +
                           csv_field(image_mse_db(img, truth[static_cast<std::size_t>(f)])) + "\n";
                    for (std::size_t ri = 0; ri < rois.size(); ++ri) {
                        if (rois[ri].pixels.empty()) continue;
                        roi_means += m + "," + std::to_string(r) + "," + std::to_string(f) + "," +
                                     rois[ri].name + "," + std::to_string(it) + "," +
                                     csv_field(roi_mean(img, rois[ri])) + "\n";
                    }
                    if (noise_roi.pixels.size() >= 2) {
                        noise += m + "," + std::to_string(r) + "," + std::to_string(f) + "," +
                                 std::to_string(it) + "," +
                                 csv_field(noise_sd_background(img, noise_roi)) + "\n";
                    }
                }
            }
        }
        if (x.n_realizations >= 2) {
            for (int f = 0; f < x.schedule.n_frames(); ++f) {
                for (std::size_t ri = 0; ri < rois.size(); ++ri) {
                    if (rois[ri].pixels.empty()) continue;
                    const double c_true =
                        roi_mean(truth[static_cast<std::size_t>(f)], rois[ri]);
                    if (!(c_true > 0.0)) continue;
                    for (int it : x.checkpoint_iters(method_iters(m))) {
                        std::vector<double> c;
                        for (int r = 0; r < x.n_realizations; ++r) {
                            c.push_back(roi_mean(checkpoint(m, r, f, it), rois[ri]));
                        }
                        const EnsembleResult er = ensemble_bias_sd(c, c_true);
                        bias_sd += m + "," + std::to_string(f) + "," + rois[ri].name + "," +
                                   std::to_string(it) + "," + csv_field(er.bias) + "," +
                                   csv_field(er.sd) + "\n";
                    }
                }
            }
        }
    }

    write_text_file(out_dir / "eval/mse.csv", mse);
    man.add_file("eval/mse.csv");
    write_text_file(out_dir / "eval/roi_means.csv", roi_means);
    man.add_file("eval/roi_means.csv");
    write_text_file(out_dir / "eval/noise.csv", noise);
    man.add_file("eval/noise.csv");
    if (x.n_realizations >= 2) {
        write_text_file(out_dir / "eval/bias_sd.csv", bias_sd);
        man.add_file("eval/bias_sd.csv");
    }
    man.stage_done("eval");
}

void cmd_report(const ExperimentConfig& x, const Config& cfg, const fs::path& out_dir) {
    RunManifest man = RunManifest::open(out_dir, cfg);
    const std::vector<Image> truth = load_truth_frames(out_dir, x);

    std::vector<std::string> methods;
    for (const std::string& m : method_names()) {
        if (fs::exists(out_dir / recon_dir_rel(m))) methods.push_back(m);
    }

    const auto method_iters = [&](const std::string& m) {
        if (m == "mlem") return x.mlem.iters;
        if (m == "kem") return x.kem.iters;
        if (m == "neural-kem") return x.neural_kem.iters;
        if (m == "dip-ot") return x.dip_ot.iters;
        return x.dip_admm.iters;
    };

    fs::create_directories(out_dir / "report");
    const int z_mid = x.grid.nz / 2;
    const auto export_pgm = [&](const std::string& name, const std::vector<double>& data) {
        const std::vector<double> slice = image_slice(data, x.grid, z_mid);
        double hi = 0.0;
        for (double v : slice) hi = std::max(hi, v);
        if (hi <= 0.0) hi = 1.0;
        const fs::path rel = fs::path("report") / name;
        write_pgm16(out_dir / rel, slice, x.grid.nx, x.grid.ny, 0.0, hi);
        man.add_file(rel);
        man.set("window_" + name, "0 " + format_f64(hi));
        if (x.grid.is_3d()) man.set("slice_" + name, std::to_string(z_mid));
    };

    for (int f = 0; f < x.schedule.n_frames(); ++f) {
        export_pgm("truth_" + ftag(f) + ".pgm", truth[static_cast<std::size_t>(f)].data);
    }

    std::string summary = "final-iteration MSE (dB) vs truth, realization 0\n";
    summary += "frame";
    for (const std::string& m : methods) summary += "\t" + m;
    summary += "\n";
    for (int f = 0; f < x.schedule.n_frames(); ++f) {
        summary += ftag(f);
        for (const std::string& m : methods) {
            const int it = method_iters(m);
            const fs::path p = out_dir / recon_dir_rel(m) /
                               ("r00_" + ftag(f) + "_iter" + zpad(it, 3) + ".f64");
            const Image img(read_image_file(p, x.grid, "recon"));
            export_pgm(m + "_" + ftag(f) + ".pgm", img.data);
            summary += "\t" + format_f64(image_mse_db(img, truth[static_cast<std::size_t>(f)]));
        }
        summary += "\n";
    }
    write_text_file(out_dir / "report/summary.txt", summary);
    man.add_file("report/summary.txt");
    man.stage_done("report");
}

void run_all(const ExperimentConfig& x, const Config& cfg, const fs::path& out_dir,
             const std::vector<std::string>& methods, int threads) {
    const std::vector<std::string>& run_methods = methods.empty() ? method_names() : methods;
    for (const std::string& m : run_methods) {
        if (!is_method(m)) fail("unknown method '" + m + "'");
    }
    cmd_phantom(x, cfg, out_dir);
    cmd_simulate(x, cfg, out_dir);
    const bool any_kernel = std::any_of(run_methods.begin(), run_methods.end(), [](const auto& m) {
        return method_needs_kernel(m) || method_is_neural(m);
    });
    if (any_kernel) cmd_build_kernel(x, cfg, out_dir, threads);
    for (const std::string& m : run_methods) cmd_recon(x, cfg, out_dir, m, threads);
    cmd_eval(x, cfg, out_dir);
    cmd_report(x, cfg, out_dir);
}

namespace {

/// Masks the wall_ms column of a trace/metric CSV so wall-clock values do
/// not defeat the determinism comparison.
std::string mask_csv_wall_ms(const std::string& text) {
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        lines.push_back(nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos));
        if (nl == std::string::npos) break;
        pos = nl + 1;
    }
    if (lines.empty()) return text;

    const auto split = [](const std::string& line) {
        std::vector<std::string> f;
        std::size_t p = 0;
        while (p <= line.size()) {
            const std::size_t c = line.find(',', p);
            f.push_back(c == std::string::npos ? line.substr(p) : line.substr(p, c - p));
            if (c == std::string::npos) break;
            p = c + 1;
        }
        return f;
    };
    const std::vector<std::string> header = split(lines[0]);
    std::ptrdiff_t wall = -1;
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == "wall_ms") wall = static_cast<std::ptrdiff_t>(i);
    }
    if (wall < 0) return text;

    std::string out = lines[0];
    for (std::size_t li = 1; li < lines.size(); ++li) {
        out += '\n';
        if (lines[li].empty()) continue;
        std::vector<std::string> f = split(lines[li]);
        if (static_cast<std::size_t>(wall) < f.size()) f[static_cast<std::size_t>(wall)] = "*";
        for (std::size_t i = 0; i < f.size(); ++i) {
            if (i) out += ',';
            out += f[i];
        }
    }
    return out;
}

/// Drops time_* keys from a key-value text file.
std::string drop_time_keys(const std::string& text) {
    std::string out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        const std::string line =
            nl == std::string::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        pos = nl == std::string::npos ? text.size() + 1 : nl + 1;
        if (line.rfind("time_", 0) == 0) continue;
        out += line;
        out += '\n';
    }
    return out;
}

}  // namespace

std::vector<std::string> compare_run_dirs(const fs::path& a, const fs::path& b) {
    const auto listing = [](const fs::path& root) {
        std::vector<std::string> rels;
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (entry.is_regular_file()) {
                rels.push_back(fs::relative(entry.path(), root).generic_string());
            }
        }
        std::sort(rels.begin(), rels.end());
        return rels;
    };
    std::vector<std::string> diffs;
    const std::vector<std::string> fa = listing(a);
    const std::vector<std::string> fb = listing(b);
    for (const std::string& f : fa) {
        if (!std::binary_search(fb.begin(), fb.end(), f)) diffs.push_back("only in A: " + f);
    }
    for (const std::string& f : fb) {
        if (!std::binary_search(fa.begin(), fa.end(), f)) diffs.push_back("only in B: " + f);
    }

    for (const std::string& f : fa) {
        if (!std::binary_search(fb.begin(), fb.end(), f)) continue;
        std::string ca = read_text_file(a / f);
        std::string cb = read_text_file(b / f);
        const fs::path pf(f);
        const std::string ext = pf.extension().string();
        if (ext == ".csv") {
            ca = mask_csv_wall_ms(ca);
            cb = mask_csv_wall_ms(cb);
        } else if (pf.filename() == "run.manifest") {
            ca = drop_time_keys(ca);
            cb = drop_time_keys(cb);
        }
        if (ca != cb) diffs.push_back("differs: " + f);
    }
    return diffs;
}

}  // namespace nkem
