#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "swt/fiducial.hpp"

namespace swt {

namespace fs = std::filesystem;

// ---------------------------------------------------------------- config

// Flat key-value text with [sections]; see config/schema.md.
struct ExperimentConfig {
    std::vector<std::string> tasks;
    unsigned seed = 20240611;
    fs::path out = "out";

    // [profile]
    double rho_max = 12;
    int n_points = 2000;
    double profile_tol = 1e-10;

    // [boundary]
    BoundaryData bd;

    // [fiducial]
    std::vector<double> fid_eps;
    int fid_n_t = 32, fid_n_r = 400;
    double fid_core = 0.02;

    // [disk]
    int disk_n = 160;
    double disk_core = 0.5;
    double disk_r_out = 20;
    int disk_kmax = 6;
    std::vector<double> disk_radii{10, 20, 40};
    std::vector<double> disk_nu{-0.4, 0, 0.4};

    // [tube]
    std::vector<double> tube_eps;
    double nu = 0.24, L0 = 8, lambda = 0;
    int tube_n_r = 120, mmax = 3, ell_factor = 4;
    double ladder_eps = 1.0 / 1024;
    int ladder_n_r = 80;
    double ident_eps = 1.0 / 256;
    int ident_fields = 20;

    // [newton]
    std::vector<double> newton_eps;
    int newton_n_t = 15, newton_n_r = 40;
    double newton_tol = 1e-9;

    static ExperimentConfig defaults();
    // canonical "section.key = value" lines, sorted; the output directory is left out
    std::string canonical() const;
    std::string hash() const;  // sha256 of canonical()
    // BadConfig on violated invariants (eps lists strictly decreasing, known tasks,
    // writable output directory)
    void validate() const;
};

// merges key-value text into cfg; BadConfig on unknown keys or malformed values
void parse_config(ExperimentConfig& cfg, const std::string& text, const std::string& origin = "<string>");
ExperimentConfig load_config(const fs::path& file);
// "section.key=value"
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

const std::vector<std::string>& known_tasks();

// ---------------------------------------------------------------- csv

// UTF-8, comma separated, header row, LF endings, doubles with 17 significant digits
class CsvWriter {
public:
    using Cell = std::variant<std::string, long long, double>;
    explicit CsvWriter(std::vector<std::string> header);
    void row(const std::vector<Cell>& cells);
    std::string str() const { return text_; }
    void write(const fs::path& file) const;

private:
    size_t cols_;
    std::string text_;
};

std::string format_double(double x);
std::vector<std::vector<std::string>> read_csv(const fs::path& file);

std::string sha256_file(const fs::path& file);
std::string sha256_hex(const std::string& data);

// ---------------------------------------------------------------- claims

struct Claim {
    std::string id;       // e.g. "C3.slope"
    int criterion = 0;
    std::string anchor;   // what the claim is about
    double measured = 0;
    std::string op;       // "<=", ">=", "<", ">", "=="
    double tolerance = 0;
    bool pass = false;
    std::string note;
};
Claim make_claim(std::string id, int criterion, std::string anchor, double measured, std::string op, double tol,
                 std::string note = "");

// wall-clock limits per criterion in seconds
double time_limit(int criterion);

// ---------------------------------------------------------------- tasks and manifest

struct FileDigest {
    std::string path;  // relative to the output directory
    std::string sha256;
};

struct TaskRecord {
    std::string name;
    std::string status;  // "ok" or "error"
    std::string error;
    double seconds = 0;
    std::vector<FileDigest> files;
};

struct RunManifest {
    std::string config_hash, version, started, finished;
    unsigned seed = 0;
    std::vector<TaskRecord> tasks;
};

// criteria covered by a task
std::vector<int> task_criteria(const std::string& task);

// Executes the configured tasks in order, writing CSVs and claims_<task>.csv
// into cfg.out, and appends one record to cfg.out/manifest.jsonl. A failing
// task is recorded with its error and the remaining tasks still run.
RunManifest run(const ExperimentConfig& cfg);

// one task; returns produced files relative to out
std::vector<std::string> run_task(const std::string& task, const ExperimentConfig& cfg);

void append_manifest(const fs::path& file, const RunManifest& m);
std::vector<RunManifest> read_manifests(const fs::path& file);

// ---------------------------------------------------------------- report

struct CriterionResult {
    int criterion = 0;
    bool evaluated = false;
    bool pass = false;
};

struct Report {
    std::vector<Claim> claims;
    std::vector<CriterionResult> criteria;  // only criteria with claims
    bool all_pass() const;
    std::string table() const;
};

// Claims of the latest record of the manifest, plus runtime claims from the
// recorded task durations and, when an earlier record with the same config hash
// exists, a determinism claim comparing digests. MissingArtifact if a listed
// file is gone.
Report report(const fs::path& manifest_file);

const char* kVersion();

}  // namespace swt
