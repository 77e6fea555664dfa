#pragma once

#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "nkem/config.hpp"
#include "nkem/experiment.hpp"
#include "nkem/io.hpp"

namespace nkem {

inline constexpr const char* kToolVersion = "0.1.0";

/// Canonical reconstruction method names, in reporting order.
const std::vector<std::string>& method_names();
bool is_method(const std::string& method);
/// Methods whose update runs in kernel coefficient space.
bool method_needs_kernel(const std::string& method);
/// Methods that train a network (and therefore need composite frames).
bool method_is_neural(const std::string& method);

/// Ledger of everything a run directory contains: tool version, config
/// hash, seed, per-stage completion timestamps, and the relative path of
/// every file any stage wrote. Lives at <out_dir>/run.manifest. Files are
/// listed once each; re-running a stage re-registers its outputs in place.
class RunManifest {
  public:
    /// Creates the manifest (and a canonical config snapshot) on first use;
    /// afterwards loads it and rejects a config whose hash differs from the
    /// one the directory was produced with.
    static RunManifest open(const std::filesystem::path& out_dir, const Config& cfg);

    /// Registers a file path relative to the run directory.
    void add_file(const std::filesystem::path& rel);
    void set(const std::string& key, const std::string& value);

    /// Records a completion timestamp for the stage and saves the manifest.
    void stage_done(const std::string& stage);
    void save() const;

    std::vector<std::string> files() const;
    const std::filesystem::path& dir() const { return dir_; }

  private:
    std::filesystem::path dir_;
    KvFile kv_;
    std::set<std::string> file_set_;  // mirror of file_* values for O(log n) dedup
};

/// Files present under out_dir but not listed in run.manifest (the manifest
/// itself excluded). A correct pipeline leaves this empty.
std::vector<std::string> orphan_files(const std::filesystem::path& out_dir);

// Stage entry points. Each loads its inputs from files earlier stages left
// in out_dir, writes its outputs, and registers them in run.manifest.
// Missing prerequisites throw with a message naming the stage to run first.

/// Phantom labels and per-frame truth images.
void cmd_phantom(const ExperimentConfig& x, const Config& cfg,
                 const std::filesystem::path& out_dir);

/// Noisy dynamic studies, one directory per realization.
void cmd_simulate(const ExperimentConfig& x, const Config& cfg,
                  const std::filesystem::path& out_dir);

/// Composite-frame images and the kNN Gaussian kernel, per realization.
void cmd_build_kernel(const ExperimentConfig& x, const Config& cfg,
                      const std::filesystem::path& out_dir, int threads);

/// Reconstruction checkpoints and iteration traces for one method across
/// all realizations and frames.
void cmd_recon(const ExperimentConfig& x, const Config& cfg,
               const std::filesystem::path& out_dir, const std::string& method, int threads);

/// CSV metric tables (MSE, ROI means, noise, and, with n_realizations >= 2,
/// ensemble bias/SD) over every reconstructed method found in out_dir.
void cmd_eval(const ExperimentConfig& x, const Config& cfg,
              const std::filesystem::path& out_dir);

/// Grayscale exports (16-bit PGM, window recorded in the manifest) and a
/// plain-text summary table.
void cmd_report(const ExperimentConfig& x, const Config& cfg,
                const std::filesystem::path& out_dir);

/// All stages in order, reconstructing with the given methods (empty =
/// every method).
void run_all(const ExperimentConfig& x, const Config& cfg, const std::filesystem::path& out_dir,
             const std::vector<std::string>& methods, int threads);

/// Compares two run directories produced from the same config and seed.
/// Binary artifacts must match byte-for-byte; .csv files are compared with
/// any wall_ms column masked and key-value text files with time_* keys
/// dropped (wall-clock values are the only nondeterministic outputs).
/// Returns human-readable differences; empty means equivalent.
std::vector<std::string> compare_run_dirs(const std::filesystem::path& a,
                                          const std::filesystem::path& b);

/// Runs fn(0..n-1) on up to `threads` workers (<=1 or n==1 runs inline).
/// Rethrows the first worker exception after all workers finish.
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

}  // namespace nkem
