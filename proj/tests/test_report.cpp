#include <doctest.h>

#include <fstream>
#include <functional>
#include <sstream>
#include <unistd.h>

#include "swt/errors.hpp"
#include "swt/report.hpp"

using namespace swt;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag)
        : path(fs::temp_directory_path() / ("swt_test_" + tag + "_" + std::to_string(getpid()))) {
        fs::remove_all(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Errc code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no throw");
    return Errc::BadConfig;
}

}  // namespace

TEST_CASE("config parsing") {
    ExperimentConfig c = ExperimentConfig::defaults();
    parse_config(c,
                 "# comment\n"
                 "[run]\n"
                 "seed = 7   # trailing\n"
                 "tasks = profile scan\n"
                 "[boundary]\n"
                 "c = 0:2:0 -1:0:0.5\n"
                 "d = 0:1\n"
                 "[tube]\n"
                 "eps = 2^-6 2^-8\n"
                 "L0 = 4\n");
    CHECK(c.seed == 7u);
    CHECK(c.tasks == std::vector<std::string>{"profile", "scan"});
    REQUIRE(c.bd.c_modes.size() == 2);
    CHECK(c.bd.c_modes[1].first == -1);
    CHECK(c.bd.c_modes[1].second == cx(0, 0.5));
    CHECK(c.bd.d_modes[0].second == cx(1, 0));
    CHECK(c.tube_eps == std::vector<double>{1.0 / 64, 1.0 / 256});
    CHECK(c.L0 == 4);

    CHECK(code_of([&] { parse_config(c, "[tube]\nbogus = 1\n"); }) == Errc::BadConfig);
    CHECK(code_of([&] { parse_config(c, "seed = 1\n"); }) == Errc::BadConfig);
    CHECK(code_of([&] { parse_config(c, "[run]\nseed = x\n"); }) == Errc::BadConfig);
    CHECK(code_of([&] { parse_config(c, "[boundary]\nc = 1\n"); }) == Errc::BadConfig);
    CHECK(code_of([&] { apply_override(c, "tube.nu"); }) == Errc::BadConfig);
    apply_override(c, "tube.nu=0.2");
    CHECK(c.nu == 0.2);
}

TEST_CASE("config invariants") {
    TempDir d("cfg");
    ExperimentConfig c = ExperimentConfig::defaults();
    c.out = d.path;
    CHECK_NOTHROW(c.validate());
    c.tube_eps = {1.0 / 256, 1.0 / 64};
    CHECK(code_of([&] { c.validate(); }) == Errc::BadConfig);
    c = ExperimentConfig::defaults();
    c.out = d.path;
    c.tasks = {"profile", "nope"};
    CHECK(code_of([&] { c.validate(); }) == Errc::BadConfig);
    c.tasks = {"profile"};
    c.bd = BoundaryData::constant(0.0, 0.0);
    CHECK(code_of([&] { c.validate(); }) == Errc::AssumptionViolated);
}

TEST_CASE("config hash ignores the output directory only") {
    ExperimentConfig a = ExperimentConfig::defaults(), b = a;
    b.out = "elsewhere";
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 64);
    b.seed += 1;
    CHECK(a.hash() != b.hash());
    // the canonical text parses back to the same config
    ExperimentConfig c = ExperimentConfig::defaults();
    c.nu = 0.1;
    c.bd.d_modes = {{2, cx(0.25, -1.5)}};
    std::string text, section;
    for (auto& line : [&] {
             std::vector<std::string> v;
             std::istringstream in(c.canonical());
             for (std::string l; std::getline(in, l);) v.push_back(l);
             return v;
         }()) {
        auto dot = line.find('.');
        std::string sec = line.substr(0, dot);
        if (sec != section) text += "[" + (section = sec) + "]\n";
        text += line.substr(dot + 1) + "\n";
    }
    ExperimentConfig d = ExperimentConfig::defaults();
    parse_config(d, text);
    CHECK(d.hash() == c.hash());
}

TEST_CASE("csv format") {
    CHECK(format_double(0.1) == "0.10000000000000001");
    CHECK(format_double(1.0) == "1");
    CsvWriter w({"a", "b", "c"});
    w.row({std::string("x,y"), 3LL, 0.5});
    w.row({std::string("q\"uote"), -1LL, 1e-300});
    CHECK(w.str() == "a,b,c\n\"x,y\",3,0.5\n\"q\"\"uote\",-1,1e-300\n");
    CHECK_THROWS(w.row({1LL}));
    TempDir d("csv");
    fs::create_directories(d.path);
    w.write(d.path / "t.csv");
    auto rows = read_csv(d.path / "t.csv");
    REQUIRE(rows.size() == 3);
    CHECK(rows[1][0] == "x,y");
    CHECK(rows[2][0] == "q\"uote");
    CHECK(std::stod(rows[2][2]) == 1e-300);
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("claims compare against pinned tolerances") {
    CHECK(make_claim("x", 1, "a", 1e-11, "<=", 1e-10).pass);
    CHECK_FALSE(make_claim("x", 1, "a", 2, "<", 2).pass);
    CHECK(make_claim("x", 1, "a", 2, "==", 2).pass);
    CHECK_FALSE(make_claim("x", 1, "a", NAN, ">=", 0).pass);
    CHECK_THROWS(make_claim("x", 1, "a", 0, "~", 0));
}

TEST_CASE("empty task list gives an empty manifest and an empty report") {
    TempDir d("empty");
    ExperimentConfig c = ExperimentConfig::defaults();
    c.out = d.path;
    c.tasks.clear();
    RunManifest m = run(c);
    CHECK(m.tasks.empty());
    auto recs = read_manifests(d.path / "manifest.jsonl");
    REQUIRE(recs.size() == 1);
    CHECK(recs[0].tasks.empty());
    CHECK(recs[0].config_hash == c.hash());
    Report r = report(d.path / "manifest.jsonl");
    CHECK(r.claims.empty());
    CHECK(r.all_pass());
}

TEST_CASE("reruns are byte identical and the manifest is append only") {
    TempDir d("rerun");
    ExperimentConfig c = ExperimentConfig::defaults();
    c.out = d.path;
    c.tasks = {"algebra", "profile"};
    run(c);
    std::ifstream f0(d.path / "manifest.jsonl");
    std::string first;
    std::getline(f0, first);
    run(c);
    auto recs = read_manifests(d.path / "manifest.jsonl");
    REQUIRE(recs.size() == 2);
    std::ifstream f1(d.path / "manifest.jsonl");
    std::string again;
    std::getline(f1, again);
    CHECK(first == again);

    Report r = report(d.path / "manifest.jsonl");
    bool found = false;
    for (auto& cl : r.claims) {
        if (cl.id == "C9.determinism") {
            found = true;
            CHECK(cl.pass);
        }
        if (cl.id == "C9.digests") CHECK(cl.pass);
    }
    CHECK(found);
    CHECK(r.all_pass());

    // a changed artifact is caught by the digests
    {
        std::ofstream g(d.path / "algebra.csv", std::ios::app);
        g << "tampered\n";
    }
    Report t = report(d.path / "manifest.jsonl");
    for (auto& cl : t.claims)
        if (cl.id == "C9.digests") CHECK_FALSE(cl.pass);

    fs::remove(d.path / "profile.csv");
    CHECK(code_of([&] { report(d.path / "manifest.jsonl"); }) == Errc::MissingArtifact);
    CHECK(code_of([&] { report(d.path / "none.jsonl"); }) == Errc::MissingArtifact);
}

TEST_CASE("coarsened profile grid fails the residual claims") {
    TempDir d("coarse");
    ExperimentConfig c = ExperimentConfig::defaults();
    c.out = d.path;
    c.tasks = {"profile"};
    c.n_points = 400;
    c.profile_tol = 1e-3;
    run(c);
    Report r = report(d.path / "manifest.jsonl");
    bool seen = false;
    for (auto& cl : r.claims)
        if (cl.id == "C1.truncation") {
            seen = true;
            CHECK_FALSE(cl.pass);
            CHECK(cl.note == "n_points 400");
        }
    CHECK(seen);
    CHECK_FALSE(r.all_pass());
}

TEST_CASE("a failing task is recorded and later tasks still run") {
    TempDir d("fail");
    ExperimentConfig c = ExperimentConfig::defaults();
    c.out = d.path;
    // valid data without a t-average, which the disk tasks need
    c.bd.c_modes = {{1, cx(1, 0)}};
    c.bd.d_modes = {};
    c.tasks = {"kernel", "algebra"};
    RunManifest m = run(c);
    REQUIRE(m.tasks.size() == 2);
    CHECK(m.tasks[0].status == "error");
    CHECK(m.tasks[0].error.find("AssumptionViolated") != std::string::npos);
    CHECK(m.tasks[1].status == "ok");
    Report r = report(d.path / "manifest.jsonl");
    CHECK_FALSE(r.all_pass());
    for (auto& cr : r.criteria)
        if (cr.criterion == 2) CHECK(cr.pass);
}
