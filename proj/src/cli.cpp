#include "tomo/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <ostream>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tomo/config.hpp"
#include "tomo/error.hpp"
#include "tomo/io.hpp"
#include "tomo/metrics.hpp"
#include "tomo/phantom.hpp"
#include "tomo/pipeline.hpp"
#include "tomo/simulate.hpp"
#include "tomo/verify.hpp"

namespace fs = std::filesystem;

namespace tomo {

namespace {

const char* const kDatasetKeys[] = {"experiment", "fine_n", "recon_n", "angles", "i0", "extent", "nbins",
                                    "et_n", "counts", "psf_fwhm", "realizations"};

std::string flag_name(std::string key)
{
    std::replace(key.begin(), key.end(), '_', '-');
    return key;
}

fs::path out_dir(const RunConfig& cfg)
{
    const fs::path dir = cfg.get("out");
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec)
        throw IoError("cannot create " + dir.string() + ": " + ec.message());
    return dir;
}

void write_provenance(const RunConfig& cfg, const fs::path& dir)
{
    write_file(dir / "provenance.txt", cfg.provenance());
}

/// Loads the dataset named by `data` and adopts its geometry keys so that
/// experiment-dependent defaults resolve against the data actually used.
Dataset load_data(RunConfig& cfg)
{
    if (cfg.get("data").empty())
        throw ConfigError("this command needs --data DIR (a directory written by simulate)");
    Dataset ds = load_dataset(cfg.get("data"));
    for (const char* key : kDatasetKeys) {
        auto it = ds.provenance.find(key);
        if (it != ds.provenance.end())
            cfg.set(key, it->second);
    }
    cfg = cfg.resolved();
    return ds;
}

int cmd_phantom(RunConfig cfg, std::ostream& out)
{
    cfg = cfg.resolved();
    const fs::path dir = out_dir(cfg);
    if (cfg.experiment() == Experiment::ct) {
        const CtSimSpec spec = cfg.ct_spec();
        const GridSpec grid = GridSpec::square(spec.recon_n, spec.extent);
        const Image img = generate_ct_phantom(spec.phantom, grid);
        write_image(dir / "phantom.img", img);
        write_pgm(dir / "phantom.pgm", img);
        write_file(dir / "phantom.txt", format_phantom_descriptor(spec.phantom));
    } else {
        const EtSimSpec spec = cfg.et_spec();
        const EtPhantom ph = generate_et_phantom(GridSpec::square(spec.n, spec.extent), spec.seed);
        write_image(dir / "phantom.img", ph.image);
        write_pgm(dir / "phantom.pgm", ph.image);
        write_mask(dir / "mask_GR.msk", ph.gaussian_region);
        write_mask(dir / "mask_BR.msk", ph.bone_region);
    }
    write_provenance(cfg, dir);
    out << "wrote " << (dir / "phantom.img").string() << "\n";
    return 0;
}

int cmd_simulate(RunConfig cfg, std::ostream& out, std::ostream& err)
{
    cfg = cfg.resolved();
    const fs::path dir = out_dir(cfg);
    const Dataset ds = cfg.experiment() == Experiment::ct ? make_ct_dataset(cfg.ct_spec()) : make_et_dataset(cfg.et_spec());
    for (const auto& w : ds.warnings)
        err << "warning: " << w << "\n";
    save_dataset(ds, dir);
    write_provenance(cfg, dir);
    out << "wrote dataset with " << ds.noisy.size() << " noisy realization(s) to " << dir.string() << "\n";
    return 0;
}

/// Fills in "auto" alpha / mu with the scale heuristic and records the values.
MethodSpec resolve_method(RunConfig& cfg, const Dataset& ds, const Projector& proj)
{
    MethodSpec m = cfg.method();
    const int r = cfg.get_int("realization");
    if (m.regularized() && cfg.is_auto("alpha")) {
        MethodSpec probe = m;
        if (probe.method == Method::tvl2)
            probe.method = Method::tv;
        m.alpha = parameter_scale(probe, SweepParam::alpha, ds, proj, r);
        cfg.set("alpha", format_double(m.alpha));
    }
    if (m.method == Method::tvl2 && cfg.is_auto("mu")) {
        m.mu = parameter_scale(m, SweepParam::mu, ds, proj, r);
        cfg.set("mu", format_double(m.mu));
    }
    return m;
}

int cmd_reconstruct(RunConfig cfg, std::ostream& out)
{
    const Dataset ds = load_data(cfg);
    {
        MethodSpec probe = cfg.method();
        if (cfg.is_auto("alpha"))
            probe.alpha = 1.0;
        probe.validate();
    }
    const Projector proj(ds.recon_projector);
    const MethodSpec m = resolve_method(cfg, ds, proj);
    const int r = cfg.get_int("realization");
    const ReconResult res = run_method(m, ds, proj, r);
    const fs::path dir = out_dir(cfg);
    write_image(dir / "recon.img", res.image);
    write_pgm(dir / "recon.pgm", res.image);
    write_file(dir / "convergence.csv", convergence_csv(res.history));
    std::string header = "method,alpha,mu,beta,rmse";
    std::string row = m.label() + "," + (m.regularized() ? format_double(m.alpha) : "") + "," +
                      (m.method == Method::tvl2 ? format_double(m.mu) : "") + "," +
                      (m.method == Method::el ? format_double(m.beta) : "") + "," + format_double(rmse(res.image, ds.ground_truth));
    for (const auto& mask : ds.masks) {
        header += "," + mask.label + "_rmse";
        row += "," + format_double(rmse(res.image, ds.ground_truth, &mask));
    }
    write_file(dir / "summary.csv", header + "\n" + row + "\n");
    write_provenance(cfg, dir);
    out << m.label() << " rmse " << format_double(rmse(res.image, ds.ground_truth)) << "\n";
    return 0;
}

int cmd_sweep(RunConfig cfg, std::ostream& out)
{
    const Dataset ds = load_data(cfg);
    const Projector proj(ds.recon_projector);
    SweepSpec s;
    s.param = parse_sweep_param(cfg.get("sweep_param"));
    const MethodSpec m0 = cfg.method();
    if (s.param == SweepParam::alpha && cfg.is_auto("alpha"))
        cfg.set("alpha", "1");
    s.base = resolve_method(cfg, ds, proj);
    s.realizations = cfg.protocol(static_cast<int>(ds.noisy.size())).realizations;
    s.select_by_regions = !ds.masks.empty();
    if (!cfg.is_auto("sweep_values")) {
        s.values = cfg.get_reals("sweep_values");
    } else {
        double center = 0.0;
        if (!cfg.is_auto("sweep_center"))
            center = cfg.get_real("sweep_center");
        else if (s.param == SweepParam::beta)
            center = m0.beta;
        else
            center = parameter_scale(s.base, s.param, ds, proj, s.realizations.front());
        s.values = log_grid(center, cfg.get_real("sweep_decades"), cfg.get_int("sweep_points"));
    }
    const SweepResult res = run_sweep(s, ds, proj);
    const fs::path dir = out_dir(cfg);
    write_file(dir / ("sweep_" + to_string(s.base.method) + ".csv"), sweep_csv(res));
    write_provenance(cfg, dir);
    out << s.base.label() << " best " << to_string(s.param) << " " << format_double(res.best_value()) << " score "
        << format_double(res.points[res.argmin].score) << "\n";
    return 0;
}

int cmd_report(RunConfig cfg, std::ostream& out)
{
    const Dataset ds = load_data(cfg);
    const ProtocolConfig pc = cfg.protocol(static_cast<int>(ds.noisy.size()));
    const ProtocolResult res = run_protocol(ds, pc);
    const fs::path dir = out_dir(cfg);
    emit_report(res, dir);
    write_provenance(cfg, dir);
    out << read_file(dir / "table.csv");
    return 0;
}

int cmd_verify(RunConfig cfg, std::ostream& out)
{
    VerifyOptions o;
    o.trials = cfg.get_int("trials");
    o.n = cfg.get_int("n");
    o.adjoint_pairs = cfg.get_int("adjoint_pairs");
    o.adjoint_grid = cfg.get_int("verify_grid");
    o.adjoint_angles = cfg.get_int("verify_angles");
    o.seed = cfg.get_u64("seed");
    o.inject_transpose_bug = cfg.get_bool("inject_transpose_bug");
    if (o.trials < 1 || o.n < 2 || o.n > 64 || o.adjoint_pairs < 1 || o.adjoint_grid < 2 || o.adjoint_angles < 1)
        throw ConfigError("verify sizes out of range (trials >= 1, 2 <= n <= 64, pairs >= 1, grid >= 2, angles >= 1)");
    bool ok = true;
    for (const auto& s : run_verify(o)) {
        out << (s.passed ? "PASS " : "FAIL ") << s.name << ": " << s.detail << "\n";
        ok = ok && s.passed;
    }
    return ok ? 0 : 1;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Tomographic reconstruction with edge-preserving regularizers"};
    app.set_version_flag("--version", "tomo 1.0");
    std::string command;
    std::string config_path;
    app.add_option("command", command, "phantom | simulate | reconstruct | sweep | report | verify");
    app.add_option("--config", config_path, "key=value configuration file");
    std::map<std::string, std::string> given;
    for (const auto& k : config_keys()) {
        if (k.name == "command")
            continue;
        std::string names = "--" + flag_name(k.name);
        if (flag_name(k.name) != k.name)
            names += ",--" + k.name;
        std::string help = k.help + " [" + k.default_value + "]";
        app.add_option(names, given[k.name], help);
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForVersion&) {
        out << "tomo 1.0\n";
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty())
            cfg.merge_file(config_path);
        for (const auto& k : config_keys())
            if (k.name != "command" && app.count("--" + flag_name(k.name)) > 0)
                cfg.set(k.name, given[k.name]);
        if (!command.empty())
            cfg.set("command", command);
        const std::string cmd = cfg.get("command");
        const int threads = cfg.get_int("threads");
        if (threads < 0)
            throw ConfigError("threads must be >= 0");
#ifdef _OPENMP
        if (threads > 0)
            omp_set_num_threads(threads);
#endif
        if (cmd == "phantom")
            return cmd_phantom(cfg, out);
        if (cmd == "simulate")
            return cmd_simulate(cfg, out, err);
        if (cmd == "reconstruct")
            return cmd_reconstruct(cfg, out);
        if (cmd == "sweep")
            return cmd_sweep(cfg, out);
        if (cmd == "report")
            return cmd_report(cfg, out);
        if (cmd == "verify")
            return cmd_verify(cfg, out);
        throw ConfigError(cmd.empty() ? "no command given (phantom, simulate, reconstruct, sweep, report, verify)"
                                      : "unknown command '" + cmd + "'");
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 4;
    }
}

} // namespace tomo
