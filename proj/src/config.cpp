#include "tomo/config.hpp"

#include <charconv>
#include <sstream>

#include "tomo/error.hpp"
#include "tomo/phantom.hpp"

namespace tomo {

const std::vector<ConfigKey>& config_keys()
{
    using T = ValueType;
    static const std::vector<ConfigKey> keys = {
        {"command", T::text, "", false, "phantom | simulate | reconstruct | sweep | report | verify"},
        {"seed", T::integer, "0", false, "master random seed"},
        {"out", T::text, "out", false, "output directory"},
        {"threads", T::integer, "0", false, "worker threads (0 = auto)"},
        {"data", T::text, "", false, "dataset directory written by simulate"},
        {"phantom", T::text, "", false, "CT phantom descriptor file (built-in phantom when empty)"},
        {"experiment", T::text, "ct", false, "ct | et"},
        {"fine_n", T::integer, "500", false, "CT data grid size"},
        {"recon_n", T::integer, "250", false, "CT reconstruction grid size"},
        {"angles", T::integer, "auto", true, "projection angles (CT 90, ET 300)"},
        {"i0", T::real, "300000", false, "CT incident photons per ray"},
        {"extent", T::real, "1", false, "physical side length of the field of view"},
        {"nbins", T::integer, "auto", true, "detector bins (auto covers the grid diagonal)"},
        {"et_n", T::integer, "400", false, "ET grid size"},
        {"counts", T::real, "10000000", false, "ET expected total counts"},
        {"psf_fwhm", T::real, "3", false, "ET detector blur FWHM in bins"},
        {"realizations", T::integer, "20", false, "ET noise realizations"},
        {"method", T::text, "el", false, "cgls | mlem | tikhonov | tv | tvl2 | el"},
        {"fidelity", T::text, "auto", true, "ls | poisson (auto: ls for CT, poisson for ET)"},
        {"alpha", T::real, "auto", true, "regularization weight (auto: scale heuristic)"},
        {"mu", T::real, "auto", true, "TV-l2 curvature weight (auto: scale heuristic)"},
        {"beta", T::real, "0.03", false, "EL edge parameter"},
        {"eps_rel", T::real, "1e-05", false, "TV smoothing relative to max(u)"},
        {"gamma_rel", T::real, "1", false, "TV-l2 smoothing relative to max(u)^2"},
        {"outer_iters", T::integer, "auto", true, "outer iterations (CT 80, ET 130)"},
        {"inner_iters", T::integer, "5", false, "inner CG or denoising steps"},
        {"rho", T::real, "0.0001", false, "early-stop threshold on squared step norms"},
        {"tau", T::real, "auto", true, "denoising step for the Poisson splitting"},
        {"precondition", T::boolean, "true", false, "Cholesky preconditioner for the inner CG"},
        {"sigma", T::real, "auto", true, "preconditioner scale (auto: largest singular value)"},
        {"realization", T::integer, "0", false, "noisy realization used by reconstruct"},
        {"sweep_param", T::text, "alpha", false, "alpha | mu | beta"},
        {"sweep_points", T::integer, "15", false, "log-spaced sweep points"},
        {"sweep_decades", T::real, "4", false, "decades spanned by the sweep"},
        {"sweep_center", T::real, "auto", true, "sweep center (auto: scale heuristic)"},
        {"sweep_values", T::real_list, "auto", true, "explicit comma-separated sweep values"},
        {"baseline_stop", T::text, "best", false, "report the unregularized baseline at its best or final iteration"},
        {"sweep_extensions", T::integer, "4", false, "times a sweep may grow past an edge minimum"},
        {"use_realizations", T::int_list, "auto", true, "realizations averaged by sweep/report (auto: all)"},
        {"alpha_tv", T::real, "auto", true, "fixed TV alpha for report (auto: swept)"},
        {"mu_tvl2", T::real, "auto", true, "fixed TV-l2 mu for report (auto: swept)"},
        {"alpha_el", T::real, "auto", true, "fixed EL alpha for report (auto: swept)"},
        {"trials", T::integer, "100", false, "verify: error-bound trials"},
        {"n", T::integer, "16", false, "verify: error-bound problem size"},
        {"adjoint_pairs", T::integer, "100", false, "verify: random pairs per adjoint configuration"},
        {"verify_grid", T::integer, "64", false, "verify: adjoint grid size"},
        {"verify_angles", T::integer, "30", false, "verify: adjoint angles"},
        {"inject_transpose_bug", T::boolean, "false", false, "verify: corrupt the adjoint (negative control)"},
    };
    return keys;
}

namespace {

const ConfigKey& key_info(const std::string& name)
{
    for (const auto& k : config_keys())
        if (k.name == name)
            return k;
    throw ConfigError("unknown configuration key '" + name + "'");
}

std::vector<std::string> split_list(const std::string& s)
{
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ','))
        out.push_back(item);
    return out;
}

void check_type(const ConfigKey& k, const std::string& v)
{
    if (k.allows_auto && v == "auto")
        return;
    switch (k.type) {
    case ValueType::text: break;
    case ValueType::integer: parse_integer(v, k.name); break;
    case ValueType::real: parse_real(v, k.name); break;
    case ValueType::boolean: parse_bool(v, k.name); break;
    case ValueType::real_list:
        if (split_list(v).empty())
            throw ConfigError("'" + k.name + "' expects a comma-separated list");
        for (const auto& s : split_list(v))
            parse_real(s, k.name);
        break;
    case ValueType::int_list:
        if (split_list(v).empty())
            throw ConfigError("'" + k.name + "' expects a comma-separated list");
        for (const auto& s : split_list(v))
            parse_integer(s, k.name);
        break;
    }
}

} // namespace

double parse_real(const std::string& s, const std::string& key)
{
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw ConfigError("'" + key + "' expects a number, got '" + s + "'");
    return v;
}

long long parse_integer(const std::string& s, const std::string& key)
{
    long long v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ConfigError("'" + key + "' expects an integer, got '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s, const std::string& key)
{
    if (s == "true" || s == "1" || s == "yes" || s == "on")
        return true;
    if (s == "false" || s == "0" || s == "no" || s == "off")
        return false;
    throw ConfigError("'" + key + "' expects true or false, got '" + s + "'");
}

RunConfig::RunConfig()
{
    for (const auto& k : config_keys())
        values_[k.name] = k.default_value;
}

void RunConfig::set(const std::string& key, const std::string& value)
{
    check_type(key_info(key), value);
    values_[key] = value;
}

void RunConfig::merge(const KeyValues& kv)
{
    for (const auto& [k, v] : kv)
        set(k, v);
}

void RunConfig::merge_file(const std::filesystem::path& path)
{
    KeyValues kv;
    try {
        kv = parse_key_values(read_file(path));
    } catch (const IoError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    merge(kv);
}

const std::string& RunConfig::get(const std::string& key) const
{
    key_info(key);
    return values_.at(key);
}

bool RunConfig::is_auto(const std::string& key) const { return get(key) == "auto"; }

int RunConfig::get_int(const std::string& key) const
{
    const long long v = parse_integer(get(key), key);
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
        throw ConfigError("'" + key + "' is out of range");
    return static_cast<int>(v);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const
{
    const long long v = parse_integer(get(key), key);
    if (v < 0)
        throw ConfigError("'" + key + "' must be nonnegative");
    return static_cast<std::uint64_t>(v);
}

double RunConfig::get_real(const std::string& key) const { return parse_real(get(key), key); }
bool RunConfig::get_bool(const std::string& key) const { return parse_bool(get(key), key); }

std::vector<double> RunConfig::get_reals(const std::string& key) const
{
    std::vector<double> out;
    for (const auto& s : split_list(get(key)))
        out.push_back(parse_real(s, key));
    return out;
}

std::vector<int> RunConfig::get_ints(const std::string& key) const
{
    std::vector<int> out;
    for (const auto& s : split_list(get(key)))
        out.push_back(static_cast<int>(parse_integer(s, key)));
    return out;
}

std::optional<double> RunConfig::get_optional_real(const std::string& key) const
{
    if (is_auto(key))
        return std::nullopt;
    return get_real(key);
}

std::optional<int> RunConfig::get_optional_int(const std::string& key) const
{
    if (is_auto(key))
        return std::nullopt;
    return get_int(key);
}

Experiment RunConfig::experiment() const
{
    const std::string& e = get("experiment");
    if (e == "ct")
        return Experiment::ct;
    if (e == "et")
        return Experiment::et;
    throw ConfigError("experiment must be ct or et, got '" + e + "'");
}

RunConfig RunConfig::resolved() const
{
    RunConfig r = *this;
    const bool ct = experiment() == Experiment::ct;
    if (r.is_auto("angles"))
        r.values_["angles"] = ct ? "90" : "300";
    if (r.is_auto("outer_iters"))
        r.values_["outer_iters"] = ct ? "80" : "130";
    if (r.is_auto("fidelity"))
        r.values_["fidelity"] = ct ? "ls" : "poisson";
    return r;
}

CtSimSpec RunConfig::ct_spec() const
{
    CtSimSpec s;
    if (!get("phantom").empty())
        s.phantom = load_phantom_descriptor(get("phantom"));
    s.fine_n = get_int("fine_n");
    s.recon_n = get_int("recon_n");
    s.n_angles = is_auto("angles") ? 90 : get_int("angles");
    s.i0 = get_real("i0");
    s.extent = get_real("extent");
    s.nbins = get_optional_int("nbins");
    s.seed = get_u64("seed");
    s.validate();
    return s;
}

EtSimSpec RunConfig::et_spec() const
{
    EtSimSpec s;
    s.n = get_int("et_n");
    s.n_angles = is_auto("angles") ? 300 : get_int("angles");
    s.total_counts = get_real("counts");
    s.psf_fwhm_bins = get_real("psf_fwhm");
    s.realizations = get_int("realizations");
    s.extent = get_real("extent");
    s.nbins = get_optional_int("nbins");
    s.seed = get_u64("seed");
    s.validate();
    return s;
}

SolverConfig RunConfig::solver() const
{
    const RunConfig r = resolved();
    SolverConfig c;
    c.outer_iters = r.get_int("outer_iters");
    c.inner_iters = r.get_int("inner_iters");
    c.rho = r.get_real("rho");
    c.tau = r.get_optional_real("tau");
    c.precondition = r.get_bool("precondition");
    c.sigma = r.get_optional_real("sigma");
    c.seed = r.get_u64("seed");
    c.validate();
    return c;
}

MethodSpec RunConfig::method() const
{
    const RunConfig r = resolved();
    MethodSpec m;
    m.method = parse_method(r.get("method"));
    m.fidelity = parse_fidelity(r.get("fidelity"));
    m.alpha = r.is_auto("alpha") ? 0.0 : r.get_real("alpha");
    m.mu = r.is_auto("mu") ? 0.0 : r.get_real("mu");
    m.beta = r.get_real("beta");
    m.eps_rel = r.get_real("eps_rel");
    m.gamma_rel = r.get_real("gamma_rel");
    m.solver = r.solver();
    return m;
}

ProtocolConfig RunConfig::protocol(int available_realizations) const
{
    ProtocolConfig p;
    p.solver = solver();
    p.beta = get_real("beta");
    p.sweep_points = get_int("sweep_points");
    p.sweep_decades = get_real("sweep_decades");
    p.max_extensions = get_int("sweep_extensions");
    const std::string& stop = get("baseline_stop");
    if (stop != "best" && stop != "final")
        throw ConfigError("baseline_stop must be best or final");
    p.baseline_at_best_iteration = stop == "best";
    if (p.max_extensions < 0)
        throw ConfigError("sweep_extensions must be >= 0");
    p.realizations.clear();
    if (is_auto("use_realizations")) {
        for (int r = 0; r < available_realizations; ++r)
            p.realizations.push_back(r);
    } else {
        p.realizations = get_ints("use_realizations");
    }
    for (int r : p.realizations)
        if (r < 0 || r >= available_realizations)
            throw ConfigError("realization " + std::to_string(r) + " not in dataset");
    p.alpha_tv = get_optional_real("alpha_tv");
    p.mu_tvl2 = get_optional_real("mu_tvl2");
    p.alpha_el = get_optional_real("alpha_el");
    return p;
}

std::string RunConfig::provenance() const
{
    std::string out;
    for (const auto& k : config_keys())
        out += k.name + "=" + values_.at(k.name) + "\n";
    return out;
}

} // namespace tomo
