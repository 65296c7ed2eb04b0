#include "swt/report.hpp"

#include <fmt/chrono.h>
#include <fmt/core.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <json.hpp>
#include <set>
#include <sstream>

#include "swt/errors.hpp"

#ifndef SWT_VERSION
#define SWT_VERSION "0.0.0"
#endif

namespace swt {

using json = nlohmann::json;

const char* kVersion() { return SWT_VERSION; }

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r"), b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

// plain numbers or powers written as 2^-6
double to_double(const std::string& s) {
    auto caret = s.find('^');
    if (caret != std::string::npos) return std::pow(to_double(s.substr(0, caret)), to_double(s.substr(caret + 1)));
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || !std::isfinite(v))
        throw Error(Errc::BadConfig, "not a number: '" + s + "'");
    return v;
}

long long to_int(const std::string& s) {
    char* end = nullptr;
    long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || end != s.c_str() + s.size()) throw Error(Errc::BadConfig, "not an integer: '" + s + "'");
    return v;
}

std::vector<double> to_doubles(const std::string& s) {
    std::vector<double> out;
    for (auto& w : words(s)) out.push_back(to_double(w));
    return out;
}

std::string join_doubles(const std::vector<double>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + format_double(v[i]);
    return s;
}

// "n:re:im" or "n:re"
std::vector<std::pair<int, cx>> to_modes(const std::string& s) {
    std::vector<std::pair<int, cx>> out;
    for (auto& w : words(s)) {
        std::vector<std::string> parts;
        std::stringstream ss(w);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        if (parts.size() < 2 || parts.size() > 3) throw Error(Errc::BadConfig, "bad mode '" + w + "', want n:re:im");
        double im = parts.size() == 3 ? to_double(parts[2]) : 0.0;
        out.emplace_back(static_cast<int>(to_int(parts[0])), cx(to_double(parts[1]), im));
    }
    return out;
}

std::string join_modes(const std::vector<std::pair<int, cx>>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i)
        s += fmt::format("{}{}:{}:{}", i ? " " : "", v[i].first, format_double(v[i].second.real()),
                         format_double(v[i].second.imag()));
    return s;
}

struct Key {
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

template <class T>
Key num(T ExperimentConfig::*m) {
    return {[m](ExperimentConfig& c, const std::string& v) {
                if constexpr (std::is_floating_point_v<T>)
                    c.*m = to_double(trim(v));
                else
                    c.*m = static_cast<T>(to_int(trim(v)));
            },
            [m](const ExperimentConfig& c) {
                if constexpr (std::is_floating_point_v<T>)
                    return format_double(c.*m);
                else
                    return std::to_string(c.*m);
            }};
}

Key list(std::vector<double> ExperimentConfig::*m) {
    return {[m](ExperimentConfig& c, const std::string& v) { c.*m = to_doubles(v); },
            [m](const ExperimentConfig& c) { return join_doubles(c.*m); }};
}

const std::map<std::string, Key>& keys() {
    static const std::map<std::string, Key> k = {
        {"run.tasks",
         {[](ExperimentConfig& c, const std::string& v) { c.tasks = words(v); },
          [](const ExperimentConfig& c) {
              std::string s;
              for (size_t i = 0; i < c.tasks.size(); ++i) s += (i ? " " : "") + c.tasks[i];
              return s;
          }}},
        {"run.seed",
         {[](ExperimentConfig& c, const std::string& v) {
              long long s = to_int(trim(v));
              if (s < 0 || s > 0xffffffffLL) throw Error(Errc::BadConfig, "seed must fit an unsigned 32 bit int");
              c.seed = static_cast<unsigned>(s);
          },
          [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
        {"run.out",
         {[](ExperimentConfig& c, const std::string& v) { c.out = trim(v); },
          [](const ExperimentConfig& c) { return c.out.string(); }}},
        {"profile.rho_max", num(&ExperimentConfig::rho_max)},
        {"profile.n_points", num(&ExperimentConfig::n_points)},
        {"profile.tol", num(&ExperimentConfig::profile_tol)},
        {"boundary.c",
         {[](ExperimentConfig& c, const std::string& v) { c.bd.c_modes = to_modes(v); },
          [](const ExperimentConfig& c) { return join_modes(c.bd.c_modes); }}},
        {"boundary.d",
         {[](ExperimentConfig& c, const std::string& v) { c.bd.d_modes = to_modes(v); },
          [](const ExperimentConfig& c) { return join_modes(c.bd.d_modes); }}},
        {"boundary.period",
         {[](ExperimentConfig& c, const std::string& v) { c.bd.t_period = to_double(trim(v)); },
          [](const ExperimentConfig& c) { return format_double(c.bd.t_period); }}},
        {"fiducial.eps", list(&ExperimentConfig::fid_eps)},
        {"fiducial.n_t", num(&ExperimentConfig::fid_n_t)},
        {"fiducial.n_r", num(&ExperimentConfig::fid_n_r)},
        {"fiducial.core", num(&ExperimentConfig::fid_core)},
        {"disk.n", num(&ExperimentConfig::disk_n)},
        {"disk.core", num(&ExperimentConfig::disk_core)},
        {"disk.r_out", num(&ExperimentConfig::disk_r_out)},
        {"disk.kmax", num(&ExperimentConfig::disk_kmax)},
        {"disk.radii", list(&ExperimentConfig::disk_radii)},
        {"disk.nu", list(&ExperimentConfig::disk_nu)},
        {"tube.eps", list(&ExperimentConfig::tube_eps)},
        {"tube.nu", num(&ExperimentConfig::nu)},
        {"tube.L0", num(&ExperimentConfig::L0)},
        {"tube.lambda", num(&ExperimentConfig::lambda)},
        {"tube.n_r", num(&ExperimentConfig::tube_n_r)},
        {"tube.mmax", num(&ExperimentConfig::mmax)},
        {"tube.ell_factor", num(&ExperimentConfig::ell_factor)},
        {"tube.ladder_eps", num(&ExperimentConfig::ladder_eps)},
        {"tube.ladder_n_r", num(&ExperimentConfig::ladder_n_r)},
        {"tube.ident_eps", num(&ExperimentConfig::ident_eps)},
        {"tube.ident_fields", num(&ExperimentConfig::ident_fields)},
        {"newton.eps", list(&ExperimentConfig::newton_eps)},
        {"newton.n_t", num(&ExperimentConfig::newton_n_t)},
        {"newton.n_r", num(&ExperimentConfig::newton_n_r)},
        {"newton.tol", num(&ExperimentConfig::newton_tol)},
    };
    return k;
}

void set_key(ExperimentConfig& cfg, const std::string& key, const std::string& value, const std::string& where) {
    auto it = keys().find(key);
    if (it == keys().end()) throw Error(Errc::BadConfig, where + ": unknown key '" + key + "'");
    try {
        it->second.set(cfg, value);
    } catch (const Error& e) {
        throw Error(Errc::BadConfig, where + ": " + key + ": " + e.what());
    }
}

void check_decreasing(const std::vector<double>& v, const char* name) {
    for (size_t i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0)) throw Error(Errc::BadConfig, std::string(name) + " must be positive");
        if (i && !(v[i] < v[i - 1])) throw Error(Errc::BadConfig, std::string(name) + " must be strictly decreasing");
    }
}

std::string now_utc() { return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(std::time(nullptr))); }

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + "\"";
}

}  // namespace

// ---------------------------------------------------------------- config

const std::vector<std::string>& known_tasks() {
    static const std::vector<std::string> t = {"algebra", "profile", "fiducial", "fredholm",
                                               "kernel",  "modes",   "scan",     "newton"};
    return t;
}

ExperimentConfig ExperimentConfig::defaults() {
    ExperimentConfig c;
    c.tasks = known_tasks();
    c.bd.c_modes = {{0, cx(1, 0)}, {1, cx(0.3, 0)}};
    c.bd.d_modes = {{0, cx(0.5, 0)}};
    for (int k = 6; k <= 11; ++k) c.fid_eps.push_back(std::ldexp(1.0, -k));
    c.tube_eps = {1.0 / 64, 1.0 / 256, 1.0 / 1024};
    c.newton_eps = {1.0 / 64, 1.0 / 256, 1.0 / 1024};
    return c;
}

std::string ExperimentConfig::canonical() const {
    std::string s;
    for (auto& [k, key] : keys())
        if (k != "run.out") s += k + " = " + key.get(*this) + "\n";
    return s;
}

std::string ExperimentConfig::hash() const { return sha256_hex(canonical()); }

void ExperimentConfig::validate() const {
    for (auto& t : tasks)
        if (std::find(known_tasks().begin(), known_tasks().end(), t) == known_tasks().end())
            throw Error(Errc::BadConfig, "unknown task '" + t + "'");
    check_decreasing(fid_eps, "fiducial.eps");
    check_decreasing(tube_eps, "tube.eps");
    check_decreasing(newton_eps, "newton.eps");
    for (size_t i = 0; i < disk_radii.size(); ++i)
        if (!(disk_radii[i] > 0) || (i && !(disk_radii[i] > disk_radii[i - 1])))
            throw Error(Errc::BadConfig, "disk.radii must be positive and increasing");
    auto wants = [&](const char* t) { return std::find(tasks.begin(), tasks.end(), t) != tasks.end(); };
    if (wants("fiducial") && fid_eps.size() < 2) throw Error(Errc::BadConfig, "fiducial.eps needs two values");
    if (wants("scan") && tube_eps.size() < 2) throw Error(Errc::BadConfig, "tube.eps needs two values");
    if (wants("newton") && newton_eps.empty()) throw Error(Errc::BadConfig, "newton.eps is empty");
    if (wants("fredholm") && disk_radii.size() < 2) throw Error(Errc::BadConfig, "disk.radii needs two values");
    if (!tasks.empty()) bd.validate();

    std::error_code ec;
    fs::create_directories(out, ec);
    fs::path probe = out / ".write_probe";
    {
        std::ofstream f(probe);
        if (!f) throw Error(Errc::BadConfig, "output directory not writable: " + out.string());
    }
    fs::remove(probe, ec);
}

void parse_config(ExperimentConfig& cfg, const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string section, line;
    for (int n = 1; std::getline(in, line); ++n) {
        std::string where = origin + ":" + std::to_string(n);
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw Error(Errc::BadConfig, where + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error(Errc::BadConfig, where + ": expected key = value");
        if (section.empty()) throw Error(Errc::BadConfig, where + ": key outside a section");
        set_key(cfg, section + "." + trim(line.substr(0, eq)), trim(line.substr(eq + 1)), where);
    }
}

ExperimentConfig load_config(const fs::path& file) {
    std::ifstream f(file);
    if (!f) throw Error(Errc::BadConfig, "cannot read config " + file.string());
    std::stringstream ss;
    ss << f.rdbuf();
    ExperimentConfig cfg = ExperimentConfig::defaults();
    parse_config(cfg, ss.str(), file.string());
    return cfg;
}

void apply_override(ExperimentConfig& cfg, const std::string& a) {
    auto eq = a.find('=');
    if (eq == std::string::npos) throw Error(Errc::BadConfig, "override '" + a + "' is not key=value");
    set_key(cfg, trim(a.substr(0, eq)), trim(a.substr(eq + 1)), "override");
}

// ---------------------------------------------------------------- csv

std::string format_double(double x) { return fmt::format("{:.17g}", x); }

CsvWriter::CsvWriter(std::vector<std::string> header) : cols_(header.size()) {
    for (size_t i = 0; i < header.size(); ++i) text_ += (i ? "," : "") + csv_escape(header[i]);
    text_ += "\n";
}

void CsvWriter::row(const std::vector<Cell>& cells) {
    if (cells.size() != cols_) throw std::logic_error("csv row width");
    for (size_t i = 0; i < cells.size(); ++i) {
        if (i) text_ += ",";
        std::visit(
            [&](auto&& v) {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, std::string>)
                    text_ += csv_escape(v);
                else if constexpr (std::is_same_v<T, double>)
                    text_ += format_double(v);
                else
                    text_ += std::to_string(v);
            },
            cells[i]);
    }
    text_ += "\n";
}

void CsvWriter::write(const fs::path& file) const {
    std::ofstream f(file, std::ios::binary);
    f << text_;
    if (!f) throw Error(Errc::MissingArtifact, "cannot write " + file.string());
}

std::vector<std::vector<std::string>> read_csv(const fs::path& file) {
    std::ifstream f(file, std::ios::binary);
    if (!f) throw Error(Errc::MissingArtifact, "cannot read " + file.string());
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false, any = false;
    for (char c; f.get(c);) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (f.peek() == '"') {
                    cell += '"';
                    f.get();
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(cell);
            cell.clear();
        } else if (c == '\n') {
            row.push_back(cell);
            rows.push_back(row);
            row.clear();
            cell.clear();
            any = false;
        } else {
            cell += c;
        }
    }
    if (any) {
        row.push_back(cell);
        rows.push_back(row);
    }
    return rows;
}

std::string sha256_hex(const std::string& data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    std::string s;
    for (unsigned i = 0; i < len; ++i) s += fmt::format("{:02x}", md[i]);
    return s;
}

std::string sha256_file(const fs::path& file) {
    std::ifstream f(file, std::ios::binary);
    if (!f) throw Error(Errc::MissingArtifact, "missing artifact " + file.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return sha256_hex(ss.str());
}

// ---------------------------------------------------------------- claims

Claim make_claim(std::string id, int criterion, std::string anchor, double measured, std::string op, double tol,
                 std::string note) {
    bool pass = false;
    if (op == "<=")
        pass = measured <= tol;
    else if (op == ">=")
        pass = measured >= tol;
    else if (op == "<")
        pass = measured < tol;
    else if (op == ">")
        pass = measured > tol;
    else if (op == "==")
        pass = measured == tol;
    else
        throw std::logic_error("unknown comparison " + op);
    return {std::move(id), criterion, std::move(anchor), measured, std::move(op), tol, pass, std::move(note)};
}

double time_limit(int c) {
    static const double lim[] = {0, 30, 10, 300, 180, 180, 180, 600, 300, 600};
    return (c >= 1 && c <= 9) ? lim[c] : 0;
}

std::vector<int> task_criteria(const std::string& t) {
    static const std::map<std::string, int> m = {{"profile", 1}, {"algebra", 2}, {"fiducial", 3},
                                                 {"fredholm", 4}, {"kernel", 5},  {"modes", 6},
                                                 {"scan", 7},     {"newton", 8}};
    auto it = m.find(t);
    return it == m.end() ? std::vector<int>{} : std::vector<int>{it->second};
}

// ---------------------------------------------------------------- manifest

namespace {

json to_json(const RunManifest& m) {
    json j;
    j["config_hash"] = m.config_hash;
    j["version"] = m.version;
    j["started"] = m.started;
    j["finished"] = m.finished;
    j["seed"] = m.seed;
    j["tasks"] = json::array();
    for (auto& t : m.tasks) {
        json jt;
        jt["name"] = t.name;
        jt["status"] = t.status;
        jt["error"] = t.error;
        jt["seconds"] = t.seconds;
        jt["files"] = json::array();
        for (auto& f : t.files) jt["files"].push_back({{"path", f.path}, {"sha256", f.sha256}});
        j["tasks"].push_back(jt);
    }
    return j;
}

RunManifest from_json(const json& j) {
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.version = j.at("version").get<std::string>();
    m.started = j.at("started").get<std::string>();
    m.finished = j.at("finished").get<std::string>();
    m.seed = j.at("seed").get<unsigned>();
    for (auto& jt : j.at("tasks")) {
        TaskRecord t;
        t.name = jt.at("name").get<std::string>();
        t.status = jt.at("status").get<std::string>();
        t.error = jt.at("error").get<std::string>();
        t.seconds = jt.at("seconds").get<double>();
        for (auto& jf : jt.at("files")) t.files.push_back({jf.at("path").get<std::string>(), jf.at("sha256").get<std::string>()});
        m.tasks.push_back(t);
    }
    return m;
}

}  // namespace

void append_manifest(const fs::path& file, const RunManifest& m) {
    std::ofstream f(file, std::ios::binary | std::ios::app);
    f << to_json(m).dump() << "\n";
    if (!f) throw Error(Errc::MissingArtifact, "cannot append to " + file.string());
}

std::vector<RunManifest> read_manifests(const fs::path& file) {
    std::ifstream f(file, std::ios::binary);
    if (!f) throw Error(Errc::MissingArtifact, "missing manifest " + file.string());
    std::vector<RunManifest> out;
    std::string line;
    for (int n = 1; std::getline(f, line); ++n) {
        if (trim(line).empty()) continue;
        try {
            out.push_back(from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(Errc::BadConfig, fmt::format("{}:{}: bad manifest record: {}", file.string(), n, e.what()));
        }
    }
    return out;
}

RunManifest run(const ExperimentConfig& cfg) {
    cfg.validate();
    RunManifest m;
    m.config_hash = cfg.hash();
    m.version = kVersion();
    m.seed = cfg.seed;
    m.started = now_utc();
    for (auto& name : cfg.tasks) {
        TaskRecord t;
        t.name = name;
        auto t0 = std::chrono::steady_clock::now();
        std::vector<std::string> files;
        try {
            files = run_task(name, cfg);
            t.status = "ok";
        } catch (const std::exception& e) {
            t.status = "error";
            t.error = e.what();
        }
        t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        for (auto& f : files) t.files.push_back({f, sha256_file(cfg.out / f)});
        m.tasks.push_back(t);
    }
    m.finished = now_utc();
    append_manifest(cfg.out / "manifest.jsonl", m);
    return m;
}

// ---------------------------------------------------------------- report

bool Report::all_pass() const {
    return std::all_of(criteria.begin(), criteria.end(), [](auto& c) { return c.pass; });
}

std::string Report::table() const {
    if (claims.empty()) return "no claims\n";
    size_t wi = 5, wa = 6;
    for (auto& c : claims) {
        wi = std::max(wi, c.id.size());
        wa = std::max(wa, c.anchor.size());
    }
    std::string s = fmt::format("{:<{}}  {:<{}}  {:>12}  {:>2} {:<12}  {}\n", "claim", wi, "anchor", wa, "measured",
                                "", "tolerance", "result");
    for (auto& c : claims) {
        s += fmt::format("{:<{}}  {:<{}}  {:>12.5g}  {:>2} {:<12.5g}  {}", c.id, wi, c.anchor, wa, c.measured, c.op,
                         c.tolerance, c.pass ? "PASS" : "FAIL");
        if (!c.note.empty()) s += "  " + c.note;
        s += "\n";
    }
    s += "\n";
    for (auto& r : criteria) s += fmt::format("criterion {}: {}\n", r.criterion, r.pass ? "PASS" : "FAIL");
    return s;
}

Report report(const fs::path& manifest_file) {
    Report rep;
    auto records = read_manifests(manifest_file);
    if (records.empty()) return rep;
    const RunManifest& last = records.back();
    const fs::path dir = manifest_file.parent_path();

    int mismatched = 0;
    double total = 0;
    for (auto& t : last.tasks) {
        total += t.seconds;
        for (auto& f : t.files) {
            if (!fs::exists(dir / f.path)) throw Error(Errc::MissingArtifact, "missing artifact " + (dir / f.path).string());
            if (sha256_file(dir / f.path) != f.sha256) ++mismatched;
        }
        auto crit = task_criteria(t.name);
        int k = crit.empty() ? 0 : crit.front();
        if (t.status != "ok") {
            rep.claims.push_back(make_claim(fmt::format("C{}.{}.status", k, t.name), k, "task completed", 0, ">", 0,
                                            "error: " + t.error));
            continue;
        }
        for (auto& f : t.files) {
            if (f.path.rfind("claims_", 0) != 0) continue;
            auto rows = read_csv(dir / f.path);
            for (size_t i = 1; i < rows.size(); ++i) {
                auto& r = rows[i];
                if (r.size() < 8) throw Error(Errc::MissingArtifact, "malformed claims file " + f.path);
                Claim c{r[0], std::stoi(r[1]), r[2], std::stod(r[3]), r[4], std::stod(r[5]), r[6] == "PASS", r[7]};
                rep.claims.push_back(c);
            }
        }
        if (k) rep.claims.push_back(make_claim(fmt::format("C{}.time", k), k, "wall clock seconds", t.seconds, "<",
                                               time_limit(k)));
    }

    if (!last.tasks.empty()) {
        rep.claims.push_back(make_claim("C9.digests", 9, "artifact digests recomputed", mismatched, "==", 0));
        rep.claims.push_back(make_claim("C9.time", 9, "full run wall clock seconds", total, "<", time_limit(9)));
        // an earlier run of the same configuration
        for (auto it = records.rbegin() + 1; it != records.rend(); ++it) {
            if (it->config_hash != last.config_hash) continue;
            std::map<std::string, std::string> before, now;
            for (auto& t : it->tasks)
                for (auto& f : t.files) before[f.path] = f.sha256;
            for (auto& t : last.tasks)
                for (auto& f : t.files) now[f.path] = f.sha256;
            int diff = 0;
            for (auto& [p, h] : now)
                if (!before.count(p) || before[p] != h) ++diff;
            for (auto& [p, h] : before)
                if (!now.count(p)) ++diff;
            rep.claims.push_back(make_claim("C9.determinism", 9, "files differing from the previous run", diff, "==", 0,
                                            "previous run " + it->started));
            break;
        }
    }

    std::map<int, CriterionResult> by;
    for (auto& c : rep.claims) {
        auto& r = by[c.criterion];
        if (!r.evaluated) r = {c.criterion, true, true};
        r.pass = r.pass && c.pass;
    }
    for (auto& [k, r] : by) rep.criteria.push_back(r);
    return rep;
}

}  // namespace swt
