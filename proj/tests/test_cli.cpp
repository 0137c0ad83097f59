#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "tomo/cli.hpp"
#include "tomo/io.hpp"
#include "tomo/pipeline.hpp"

namespace fs = std::filesystem;
using namespace tomo;

namespace {

struct Run {
    int code = 0;
    std::string out, err;
};

Run cli(std::vector<std::string> args)
{
    std::ostringstream o, e;
    Run r;
    r.code = run_cli(args, o, e);
    r.out = o.str();
    r.err = e.str();
    return r;
}

fs::path scratch(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("tomo_cli_" + name);
    fs::remove_all(p);
    return p;
}

/// 64×64 CT data at 30 angles, written once per test binary.
const fs::path& ct_data()
{
    static const fs::path dir = [] {
        const fs::path d = scratch("ct_data");
        const Run r = cli({"simulate", "--experiment", "ct", "--fine-n", "128", "--recon-n", "64", "--angles", "30",
                           "--extent", "0.07", "--seed", "3", "--out", d.string()});
        REQUIRE(r.code == 0);
        return d;
    }();
    return dir;
}

} // namespace

TEST_CASE("configuration errors exit with 2")
{
    const std::string data = ct_data().string();
    const Run r = cli({"reconstruct", "--data", data, "--method", "el", "--fidelity", "ls", "--alpha", "0",
                       "--out", scratch("bad").string()});
    CHECK(r.code == 2);
    CHECK(r.err.find("alpha") != std::string::npos);

    CHECK(cli({"reconstruct", "--data", data, "--method", "cgls", "--fidelity", "poisson"}).code == 2);
    CHECK(cli({"frobnicate"}).code == 2);
    CHECK(cli({}).code == 2);
    CHECK(cli({"verify", "--no-such-flag", "1"}).code == 2);
    CHECK(cli({"verify", "--n", "1"}).code == 2);

    const fs::path cfg = scratch("unknown.cfg");
    write_file(cfg, "command=verify\nsmoothness=3\n");
    CHECK(cli({"--config", cfg.string()}).code == 2);
}

TEST_CASE("I/O errors exit with 3")
{
    CHECK(cli({"reconstruct", "--data", scratch("missing").string()}).code == 3);
    CHECK(cli({"--config", scratch("missing.cfg").string()}).code == 3);
}

TEST_CASE("phantom command")
{
    const fs::path d = scratch("phantom");
    REQUIRE(cli({"phantom", "--recon-n", "32", "--out", d.string()}).code == 0);
    CHECK(read_image(d / "phantom.img").grid.nx == 32);
    CHECK(fs::exists(d / "phantom.pgm"));

    const fs::path e = scratch("phantom_et");
    REQUIRE(cli({"phantom", "--experiment", "et", "--et-n", "64", "--out", e.string()}).code == 0);
    CHECK(fs::exists(e / "mask_GR.msk"));
    CHECK(fs::exists(e / "mask_BR.msk"));
}

TEST_CASE("command-line flags override the configuration file")
{
    const fs::path cfg = scratch("prec.cfg");
    const fs::path a = scratch("prec_a"), b = scratch("prec_b");
    write_file(cfg, "command=reconstruct\nmethod=tv\nalpha=5\nouter_iters=4\ndata=" + ct_data().string() + "\nout=" +
                        a.string() + "\n");
    REQUIRE(cli({"--config", cfg.string()}).code == 0);
    REQUIRE(cli({"--config", cfg.string(), "--alpha", "7e-3", "--out", b.string()}).code == 0);
    const std::string pa = read_file(a / "provenance.txt"), pb = read_file(b / "provenance.txt");
    CHECK(pa.find("alpha=5\n") != std::string::npos);
    CHECK(pb.find("alpha=7e-3\n") != std::string::npos);
    CHECK(pb.find("method=tv\n") != std::string::npos);
}

TEST_CASE("provenance reproduces a run")
{
    const fs::path a = scratch("prov_a"), b = scratch("prov_b");
    REQUIRE(cli({"reconstruct", "--data", ct_data().string(), "--method", "el", "--outer-iters", "6", "--out",
                 a.string()})
                .code == 0);
    // auto alpha was resolved and recorded
    CHECK(read_file(a / "provenance.txt").find("alpha=auto") == std::string::npos);
    REQUIRE(cli({"--config", (a / "provenance.txt").string(), "--out", b.string()}).code == 0);
    CHECK(read_file(a / "recon.img") == read_file(b / "recon.img"));
    CHECK(read_file(a / "summary.csv") == read_file(b / "summary.csv"));
}

TEST_CASE("sweep command")
{
    const fs::path d = scratch("sweep");
    const Run r = cli({"sweep", "--data", ct_data().string(), "--method", "tv", "--outer-iters", "6", "--sweep-points",
                       "3", "--out", d.string()});
    REQUIRE(r.code == 0);
    CHECK(parse_csv(read_file(d / "sweep_tv.csv")).size() == 4);

    const fs::path one = scratch("sweep_one");
    REQUIRE(cli({"sweep", "--data", ct_data().string(), "--method", "tv", "--outer-iters", "6", "--sweep-values",
                 "0.001", "--out", one.string()})
                .code == 0);
    CHECK(parse_csv(read_file(one / "sweep_tv.csv")).size() == 2);
}

TEST_CASE("CT report end to end and reruns are byte-identical")
{
    const fs::path a = scratch("report_a"), b = scratch("report_b");
    const std::vector<std::string> args{"report", "--data", ct_data().string(), "--outer-iters", "20",
                                        "--sweep-points", "5", "--sweep-extensions", "1"};
    auto with_out = [&](const fs::path& d) {
        auto v = args;
        v.push_back("--out");
        v.push_back(d.string());
        return v;
    };
    REQUIRE(cli(with_out(a)).code == 0);
    REQUIRE(cli(with_out(b)).code == 0);

    const auto table = parse_csv(read_file(a / "table.csv"));
    REQUIRE(table.size() == 5);
    CHECK(table[1][0] == "CGLS");
    CHECK(table[2][0] == "CGLS-TV");
    CHECK(table[3][0] == "CGLS-TV-L2");
    CHECK(table[4][0] == "CGLS-EL");
    for (std::size_t i = 1; i < 5; ++i)
        CHECK(std::stod(table[i][2]) > 0.0);

    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        const fs::path other = b / e.path().filename();
        if (e.path().filename() == "provenance.txt")
            continue;
        CAPTURE(e.path().filename().string());
        REQUIRE(fs::exists(other));
        CHECK(read_file(e.path()) == read_file(other));
        ++files;
    }
    CHECK(files >= 13);
}

TEST_CASE("verify command")
{
    Run r = cli({"verify"});
    CHECK(r.code == 0);
    CHECK(r.out.find("FAIL") == std::string::npos);
    CHECK(r.out.find("max slack") != std::string::npos);

    r = cli({"verify", "--trials", "100", "--n", "16"});
    CHECK(r.code == 0);
    CHECK(r.out.find("100 trials") != std::string::npos);
    CHECK(r.out.find("0 violations") != std::string::npos);

    r = cli({"verify", "--inject-transpose-bug", "true", "--adjoint-pairs", "5"});
    CHECK(r.code == 1);
    CHECK(r.out.find("FAIL adjoint") != std::string::npos);
}
