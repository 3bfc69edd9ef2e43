#include "mortfit/cli.hpp"
#include "mortfit/harness.hpp"
#include "mortfit/synthetic.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace mortfit;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run cli(std::vector<std::string> args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
    const fs::path dir = fs::temp_directory_path() / "mortfit_cli_test";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string write_surface(const fs::path &path, const MortalitySurface &s) {
    std::ofstream out(path, std::ios::binary);
    write_surface_csv(out, s);
    return path.string();
}

std::vector<std::string> lines_of(const std::string &text) {
    std::vector<std::string> lines;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        lines.push_back(line);
    }
    return lines;
}

} // namespace

TEST_CASE("simulate is deterministic and matches the library") {
    const auto a = cli({"simulate", "--model", "rh", "--ages", "60:64", "--years", "1990:1997",
                        "--seed", "7", "--noise", "0.01"});
    const auto b = cli({"simulate", "--model", "rh", "--ages", "60:64", "--years", "1990:1997",
                        "--seed", "7", "--noise", "0.01"});
    REQUIRE(a.code == kExitConverged);
    CHECK(a.out == b.out);
    const auto gen = default_generator(ModelKind::RH, IntRange{60, 64}.values(),
                                       IntRange{1990, 1997}.values());
    std::ostringstream expected;
    write_surface_csv(expected, synthesize_surface(gen, 1e5, 0.01, 7));
    CHECK(a.out == expected.str());
    const auto c = cli({"simulate", "--model", "rh", "--ages", "60:64", "--years", "1990:1997",
                        "--seed", "8", "--noise", "0.01"});
    CHECK(c.out != a.out);
}

TEST_CASE("simulate with Poisson deaths") {
    const auto r = cli({"simulate", "--model", "h1", "--ages", "60:69", "--years", "1990:1999",
                        "--poisson", "--exposure", "5e4", "--seed", "3"});
    REQUIRE(r.code == kExitConverged);
    std::istringstream in(r.out);
    const auto s = read_surface_csv(in);
    CHECK(s.num_ages() == 10);
    CHECK((s.deaths().array() == s.deaths().array().round()).all());
    CHECK((s.exposures().array() == 5e4).all());
}

TEST_CASE("simulate from a parameter file") {
    const auto dir = scratch_dir();
    const auto gen = default_generator(ModelKind::APC, IntRange{70, 74}.values(),
                                       IntRange{2000, 2005}.values());
    {
        std::ofstream out(dir / "apc.json");
        out << to_json(gen);
    }
    const auto r = cli({"simulate", "--params", (dir / "apc.json").string()});
    REQUIRE(r.code == kExitConverged);
    std::istringstream in(r.out);
    const auto s = read_surface_csv(in);
    CHECK(s.ages() == gen.ages);
    CHECK(s.log_rates() == fitted_log_rates(gen));
}

TEST_CASE("noiseless round trip through fit") {
    const auto dir = scratch_dir();
    const auto gen = default_generator(ModelKind::RH, IntRange{60, 69}.values(),
                                       IntRange{1980, 1994}.values());
    const auto surface = synthesize_surface(gen, 1e5, 0.0, 1);
    const auto path = write_surface(dir / "noiseless.csv", surface);
    const auto out = (dir / "rh.json").string();
    const auto r = cli({"fit", "--surface", path, "--model", "rh", "--method", "ls", "--out", out});
    CHECK(r.code == kExitConverged);
    const auto params = params_from_json(slurp(out));
    CHECK(l2_error(surface.log_rates(), params) < 1e-10);
    const auto report = slurp(out + ".report.json");
    CHECK(report.find("\"converged\":true") != std::string::npos);
    CHECK(report.find("\"objective_trace\":[") != std::string::npos);
}

TEST_CASE("fit output equals the library result byte for byte") {
    const auto dir = scratch_dir();
    const auto gen = default_generator(ModelKind::H1, IntRange{60, 67}.values(),
                                       IntRange{1980, 1991}.values());
    const auto surface = synthesize_surface(gen, 2e4, 0.02, 5, NoiseMode::Poisson);
    const auto path = write_surface(dir / "h1.csv", surface);
    // Re-read so both sides see the same decimal round trip of the surface.
    std::ifstream in(path);
    const auto reread = read_surface_csv(in);

    for (const std::string method : {"ls", "mle"}) {
        CAPTURE(method);
        const auto r = cli({"fit", "--surface", path, "--model", "h1", "--method", method, "--hv"});
        REQUIRE(r.code == kExitConverged);
        const auto lib = run_method(reread, parse_method("H1-" + method + "-HV"), 1e-8);
        CHECK(r.out == to_json(lib.params));
        std::ostringstream csv;
        write_params_csv(csv, lib.params);
        const auto c = cli({"fit", "--surface", path, "--model", "h1", "--method", method, "--hv",
                            "--format", "csv"});
        CHECK(c.out == csv.str());
    }
}

TEST_CASE("smallest surface") {
    const auto dir = scratch_dir();
    Eigen::MatrixXd d(2, 2);
    d << 10, 9, 20, 19;
    const MortalitySurface s({60, 61}, {2000, 2001}, d, Eigen::MatrixXd::Constant(2, 2, 1000.0));
    const auto path = write_surface(dir / "tiny.csv", s);
    const auto r = cli({"fit", "--surface", path, "--model", "lc"});
    CHECK(r.code == kExitConverged);
    const auto params = params_from_json(r.out);
    CHECK(params.a.size() == 2);
    CHECK(params.k.size() == 2);
    CHECK(std::abs(params.b.sum() - 1.0) < 1e-12);
}

TEST_CASE("exit codes") {
    const auto dir = scratch_dir();
    const auto gen = default_generator(ModelKind::RH, IntRange{60, 69}.values(),
                                       IntRange{1980, 1994}.values());
    const auto noisy = write_surface(dir / "noisy.csv",
                                     synthesize_surface(gen, 2e4, 0.02, 2, NoiseMode::Poisson));

    SUBCASE("iteration cap gives 2") {
        const auto r = cli({"fit", "--surface", noisy, "--model", "rh", "--max-iter", "1"});
        CHECK(r.code == kExitNotConverged);
        CHECK(r.err.find("did not converge") != std::string::npos);
        CHECK_FALSE(r.out.empty());
    }
    SUBCASE("rate-only input to an MLE fit gives 1") {
        const auto s = synthesize_surface(gen, 2e4, 0.0, 1);
        const auto rates =
            write_surface(dir / "rates.csv",
                          MortalitySurface::from_rates(s.ages(), s.years(),
                                                       s.log_rates().array().exp()));
        const auto r = cli({"fit", "--surface", rates, "--model", "rh", "--method", "mle"});
        CHECK(r.code == kExitError);
        CHECK(r.err.find("exposures") != std::string::npos);
        CHECK(cli({"fit", "--surface", rates, "--model", "rh"}).code == kExitConverged);
    }
    SUBCASE("usage and input errors give 1") {
        CHECK(cli({"fit"}).code == kExitError);
        CHECK(cli({"frobnicate"}).code == kExitError);
        CHECK(cli({"fit", "--surface", noisy, "--model", "cbd"}).code == kExitError);
        CHECK(cli({"fit", "--surface", noisy, "--tol", "2"}).code == kExitError);
        CHECK(cli({"fit", "--surface", (dir / "absent.csv").string()}).code == kExitError);
        CHECK(cli({"compare", "--surface", noisy, "--methods", "rh-ls-hv"}).code == kExitError);
        {
            std::ofstream bad(dir / "bad.csv");
            bad << "age,year,deaths,exposure,log_rate\n60,2000,1,x,0\n";
        }
        const auto r = cli({"fit", "--surface", (dir / "bad.csv").string()});
        CHECK(r.code == kExitError);
        CHECK(r.err.rfind("error: line 2", 0) == 0);
    }
}

TEST_CASE("compare and sweep CSVs") {
    const auto dir = scratch_dir();
    const auto gen = default_generator(ModelKind::RH, IntRange{60, 69}.values(),
                                       IntRange{1980, 1994}.values());
    const auto path = write_surface(dir / "cmp.csv",
                                    synthesize_surface(gen, 2e4, 0.02, 4, NoiseMode::Poisson));

    const auto c = cli({"compare", "--surface", path, "--methods", "h1-ls,h1-ls-hv,apc-mle",
                        "--no-warm-up"});
    CHECK(c.code == kExitConverged);
    auto lines = lines_of(c.out);
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "method,l2_error,loglik,wall_time_seconds,iterations,converged");
    CHECK(lines[1].rfind("H1-LS,", 0) == 0);
    CHECK(lines[2].rfind("H1-LS-HV,", 0) == 0);
    CHECK(lines[3].rfind("APC-MLE,", 0) == 0);

    const auto out = (dir / "sweep.csv").string();
    const auto s = cli({"sweep", "--surface", path, "--method", "apc-ls", "--no-warm-up", "--out",
                        out});
    CHECK(s.code == kExitConverged);
    lines = lines_of(slurp(out));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] == "tol,l2_error,loglik,wall_time_seconds,max_param_delta");
    CHECK(lines[1].rfind("9.9999999999999995e-07,", 0) == 0);
    CHECK(lines[3].substr(lines[3].rfind(',') + 1) == "0");
}

TEST_CASE("installed binary reports exit codes") {
    const auto dir = scratch_dir();
    const std::string bin = MORTFIT_CLI_PATH;
    const auto surface = dir / "bin.csv";
    const auto sim = std::system((bin + " simulate --ages 60:64 --years 1990:1996 --out " +
                                  surface.string())
                                     .c_str());
    REQUIRE(WIFEXITED(sim));
    CHECK(WEXITSTATUS(sim) == 0);
    const auto fit = std::system(
        (bin + " fit --surface " + surface.string() + " --model apc --out " +
         (dir / "bin.json").string() + " 2>/dev/null")
            .c_str());
    CHECK(WEXITSTATUS(fit) == 0);
    const auto capped = std::system((bin + " fit --surface " + surface.string() +
                                     " --model rh --max-iter 1 >/dev/null 2>&1")
                                        .c_str());
    CHECK(WEXITSTATUS(capped) == 2);
    const auto bad = std::system((bin + " fit --model rh >/dev/null 2>&1").c_str());
    CHECK(WEXITSTATUS(bad) == 1);
}
