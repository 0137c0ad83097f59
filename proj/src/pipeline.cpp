#include "tomo/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "tomo/error.hpp"
#include "tomo/io.hpp"

namespace tomo {

std::string to_string(Method m)
{
    switch (m) {
    case Method::cgls: return "cgls";
    case Method::mlem: return "mlem";
    case Method::tikhonov: return "tikhonov";
    case Method::tv: return "tv";
    case Method::tvl2: return "tvl2";
    case Method::el: return "el";
    }
    return "?";
}

std::string to_string(Fidelity f) { return f == Fidelity::ls ? "ls" : "poisson"; }

Method parse_method(const std::string& s)
{
    for (Method m : {Method::cgls, Method::mlem, Method::tikhonov, Method::tv, Method::tvl2, Method::el})
        if (to_string(m) == s)
            return m;
    throw ConfigError("unknown method '" + s + "'");
}

Fidelity parse_fidelity(const std::string& s)
{
    if (s == "ls")
        return Fidelity::ls;
    if (s == "poisson")
        return Fidelity::poisson;
    throw ConfigError("unknown fidelity '" + s + "'");
}

void MethodSpec::validate() const
{
    if (method == Method::cgls && fidelity != Fidelity::ls)
        throw ConfigError("cgls requires --fidelity ls");
    if (method == Method::mlem && fidelity != Fidelity::poisson)
        throw ConfigError("mlem requires --fidelity poisson");
    if (regularized() && !(alpha > 0.0))
        throw ConfigError(to_string(method) + " needs alpha > 0");
    if (method == Method::tvl2 && !(mu >= 0.0))
        throw ConfigError("tvl2 needs mu >= 0");
    if (method == Method::el && !(beta > 0.0))
        throw ConfigError("el needs beta > 0");
    solver.validate();
}

std::optional<PenaltyKind> MethodSpec::penalty() const
{
    switch (method) {
    case Method::tikhonov: return Tikhonov{};
    case Method::tv: return TotalVariation{eps_rel};
    case Method::tvl2: return TvL2{eps_rel, gamma_rel, mu, alpha};
    case Method::el: return EdgeLaplacian{beta};
    default: return std::nullopt;
    }
}

std::string MethodSpec::label() const
{
    const std::string base = fidelity == Fidelity::ls ? "CGLS" : "MLEM";
    switch (method) {
    case Method::tikhonov: return base + "-Tikhonov";
    case Method::tv: return base + "-TV";
    case Method::tvl2: return base + "-TV-L2";
    case Method::el: return base + "-EL";
    default: return base;
    }
}

ReconResult run_method(const MethodSpec& spec, const Projector& proj, const Eigen::VectorXd& b, const ReconOptions& opts)
{
    spec.validate();
    const GridSpec& grid = proj.spec().grid;
    SolverConfig cfg = spec.solver;
    cfg.alpha = spec.regularized() ? spec.alpha : 0.0;
    if (spec.method == Method::cgls)
        return cgls(proj, grid, b, cfg.outer_iters, opts);
    if (spec.method == Method::tvl2 && spec.mu == 0.0) {
        // Without the curvature term the TV-l2 matrix is exactly alpha times the TV matrix.
        MethodSpec tv = spec;
        tv.method = Method::tv;
        return run_method(tv, proj, b, opts);
    }
    const PenaltyKind kind = spec.penalty().value_or(PenaltyKind{Tikhonov{}});
    if (spec.fidelity == Fidelity::poisson)
        return mlem_split_reconstruct(proj, grid, b, kind, cfg, opts);
    return fixed_point_reconstruct(proj, grid, b, kind, cfg, opts);
}

ReconResult run_method(const MethodSpec& spec, const Dataset& ds, const Projector& proj, int realization)
{
    if (realization < 0 || realization >= static_cast<int>(ds.noisy.size()))
        throw ConfigError("realization " + std::to_string(realization) + " not in dataset");
    ReconOptions opts;
    opts.ground_truth = ds.ground_truth;
    opts.masks = ds.masks;
    return run_method(spec, proj, ds.noisy[static_cast<std::size_t>(realization)].values, opts);
}

std::string to_string(SweepParam p)
{
    switch (p) {
    case SweepParam::alpha: return "alpha";
    case SweepParam::mu: return "mu";
    case SweepParam::beta: return "beta";
    }
    return "?";
}

SweepParam parse_sweep_param(const std::string& s)
{
    for (SweepParam p : {SweepParam::alpha, SweepParam::mu, SweepParam::beta})
        if (to_string(p) == s)
            return p;
    throw ConfigError("unknown sweep parameter '" + s + "'");
}

void SweepSpec::validate() const
{
    if (values.empty())
        throw ConfigError("a sweep needs at least one grid point");
    for (double v : values)
        if (!(v > 0.0) || !std::isfinite(v))
            throw ConfigError("sweep values must be positive");
    if (realizations.empty())
        throw ConfigError("a sweep needs at least one realization");
    if (param == SweepParam::mu && base.method != Method::tvl2)
        throw ConfigError("mu sweeps only apply to tvl2");
    if (param == SweepParam::beta && base.method != Method::el)
        throw ConfigError("beta sweeps only apply to el");
    if (param == SweepParam::alpha && !base.regularized())
        throw ConfigError("alpha sweeps need a regularized method");
}

namespace {

MethodSpec with_param(MethodSpec m, SweepParam p, double v)
{
    switch (p) {
    case SweepParam::alpha: m.alpha = v; break;
    case SweepParam::mu: m.mu = v; break;
    case SweepParam::beta: m.beta = v; break;
    }
    return m;
}

double mean(const std::vector<double>& xs)
{
    double s = 0.0;
    for (double x : xs)
        s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

} // namespace

SweepResult run_sweep(const SweepSpec& spec, const Dataset& ds, const Projector& proj)
{
    spec.validate();
    SweepResult res;
    res.param = spec.param;
    for (double v : spec.values) {
        SweepPoint pt;
        pt.value = v;
        const MethodSpec m = with_param(spec.base, spec.param, v);
        std::vector<std::vector<double>> regions(ds.masks.size());
        try {
            for (int r : spec.realizations) {
                const ReconResult rr = run_method(m, ds, proj, r);
                pt.rmse_per_realization.push_back(rmse(rr.image, ds.ground_truth));
                for (std::size_t k = 0; k < ds.masks.size(); ++k)
                    regions[k].push_back(rmse(rr.image, ds.ground_truth, &ds.masks[k]));
            }
            pt.ok = true;
        } catch (const NumericalError& e) {
            pt.ok = false;
            pt.error = e.what();
        }
        if (pt.ok) {
            pt.mean_rmse = mean(pt.rmse_per_realization);
            for (const auto& reg : regions)
                pt.region_means.push_back(mean(reg));
            pt.score = spec.select_by_regions && !pt.region_means.empty() ? mean(pt.region_means) : pt.mean_rmse;
        }
        res.points.push_back(std::move(pt));
    }
    bool found = false;
    for (std::size_t i = 0; i < res.points.size(); ++i) {
        const auto& p = res.points[i];
        if (!p.ok)
            continue;
        const auto& best = res.points[res.argmin];
        if (!found || p.score < best.score || (p.score == best.score && p.value < best.value)) {
            res.argmin = i;
            found = true;
        }
    }
    if (!found)
        throw NumericalError("every sweep point failed");
    return res;
}

SweepResult run_extending_sweep(SweepSpec spec, const Dataset& ds, const Projector& proj, int max_extensions, bool extend_low)
{
    std::sort(spec.values.begin(), spec.values.end());
    SweepResult res = run_sweep(spec, ds, proj);
    if (spec.values.size() < 2)
        return res;
    const int extra = std::max(2, static_cast<int>(spec.values.size()) / 2);
    for (int e = 0; e < max_extensions; ++e) {
        const bool low = extend_low && res.argmin == 0;
        const bool high = res.argmin + 1 == res.points.size();
        if (!low && !high)
            break;
        const std::size_t n = spec.values.size();
        const double ratio = low ? spec.values[0] / spec.values[1] : spec.values[n - 1] / spec.values[n - 2];
        SweepSpec more = spec;
        more.values.clear();
        double v = low ? spec.values.front() : spec.values.back();
        for (int k = 0; k < extra; ++k) {
            v *= ratio;
            more.values.push_back(v);
        }
        std::sort(more.values.begin(), more.values.end());
        SweepResult added = run_sweep(more, ds, proj);
        if (low) {
            spec.values.insert(spec.values.begin(), more.values.begin(), more.values.end());
            added.points.insert(added.points.end(), res.points.begin(), res.points.end());
            res.points = std::move(added.points);
        } else {
            spec.values.insert(spec.values.end(), more.values.begin(), more.values.end());
            res.points.insert(res.points.end(), added.points.begin(), added.points.end());
        }
        res.argmin = 0;
        for (std::size_t i = 1; i < res.points.size(); ++i) {
            const auto& p = res.points[i];
            const auto& best = res.points[res.argmin];
            if (p.ok && (!best.ok || p.score < best.score))
                res.argmin = i;
        }
    }
    return res;
}

std::vector<double> log_grid(double center, double decades, int points)
{
    if (!(center > 0.0) || points < 2 || !(decades > 0.0))
        throw ConfigError("log grid needs center > 0, decades > 0 and at least two points");
    std::vector<double> out;
    for (int k = 0; k < points; ++k)
        out.push_back(center * std::pow(10.0, decades * (static_cast<double>(k) / (points - 1) - 0.5)));
    return out;
}

double parameter_scale(const MethodSpec& spec, SweepParam param, const Dataset& ds, const Projector& proj, int realization)
{
    const Eigen::VectorXd& b = ds.noisy.at(static_cast<std::size_t>(realization)).values;
    const GridSpec& grid = proj.spec().grid;
    Image u0;
    double numerator = 0.0;
    if (spec.fidelity == Fidelity::ls) {
        u0 = cgls(proj, grid, b, 10).image;
        numerator = proj.apply_adjoint(b).lpNorm<Eigen::Infinity>();
    } else {
        SolverConfig cfg;
        cfg.outer_iters = 10;
        u0 = mlem_split_reconstruct(proj, grid, b, Tikhonov{}, cfg).image;
        numerator = u0.values.lpNorm<Eigen::Infinity>();
    }
    MethodSpec probe = spec;
    if (probe.alpha <= 0.0)
        probe.alpha = 1.0;
    Eigen::VectorXd ru;
    if (param == SweepParam::mu) {
        MethodSpec with_mu = probe;
        with_mu.mu = 1.0;
        MethodSpec without_mu = probe;
        without_mu.mu = 0.0;
        ru = build_gradient_matrix(*with_mu.penalty(), u0).apply(u0.values) -
             build_gradient_matrix(*without_mu.penalty(), u0).apply(u0.values);
    } else {
        const PenaltyKind kind = *probe.penalty();
        ru = build_gradient_matrix(kind, u0).apply(u0.values);
        if (std::holds_alternative<TvL2>(kind))
            ru /= probe.alpha;
    }
    const double denom = ru.lpNorm<Eigen::Infinity>();
    if (!(denom > 0.0) || !(numerator > 0.0))
        throw NumericalError("cannot derive a parameter scale from the data");
    return numerator / denom;
}

const MethodOutcome& ProtocolResult::find(Method m) const
{
    for (const auto& o : methods)
        if (o.spec.method == m)
            return o;
    throw ConfigError("method " + to_string(m) + " not in protocol result");
}

namespace {

MethodOutcome finish(MethodSpec spec, const Dataset& ds, const Projector& proj, const std::vector<int>& realizations)
{
    MethodOutcome out;
    out.spec = std::move(spec);
    std::vector<std::vector<double>> regions(ds.masks.size());
    for (int r : realizations) {
        ReconResult rr = run_method(out.spec, ds, proj, r);
        out.rmse_per_realization.push_back(rmse(rr.image, ds.ground_truth));
        for (std::size_t k = 0; k < ds.masks.size(); ++k)
            regions[k].push_back(rmse(rr.image, ds.ground_truth, &ds.masks[k]));
        out.runs.push_back(std::move(rr));
    }
    out.mean_rmse = mean(out.rmse_per_realization);
    for (const auto& reg : regions)
        out.region_means.push_back(mean(reg));
    return out;
}

/// Prepends the μ = 0 point (the TV outcome itself) to a μ sweep.
void add_tv_limit(SweepResult& sweep, const MethodOutcome& tv, bool by_regions)
{
    SweepPoint zero;
    zero.value = 0.0;
    zero.ok = true;
    zero.rmse_per_realization = tv.rmse_per_realization;
    zero.mean_rmse = tv.mean_rmse;
    zero.region_means = tv.region_means;
    zero.score = by_regions && !tv.region_means.empty() ? mean(tv.region_means) : tv.mean_rmse;
    sweep.points.insert(sweep.points.begin(), std::move(zero));
    std::size_t best = 0;
    for (std::size_t i = 1; i < sweep.points.size(); ++i)
        if (sweep.points[i].ok && sweep.points[i].score < sweep.points[best].score)
            best = i;
    sweep.argmin = best;
}

double score_of(const IterationRecord& r, bool by_regions)
{
    if (by_regions && !r.region_rmse.empty())
        return mean(r.region_rmse);
    return r.rmse.value_or(0.0);
}

/// Baseline stopped at the iteration with the smallest mean score.
MethodOutcome finish_at_best_iteration(MethodSpec spec, const Dataset& ds, const Projector& proj,
                                       const std::vector<int>& realizations, bool by_regions)
{
    std::vector<double> score(static_cast<std::size_t>(spec.solver.outer_iters), 0.0);
    std::vector<IterationRecord> first;
    for (int r : realizations) {
        const ReconResult full = run_method(spec, ds, proj, r);
        for (std::size_t k = 0; k < score.size(); ++k)
            score[k] += k < full.history.size() ? score_of(full.history[k], by_regions)
                                                : std::numeric_limits<double>::infinity();
        if (first.empty())
            first = full.history;
    }
    const auto best = static_cast<int>(std::min_element(score.begin(), score.end()) - score.begin()) + 1;
    spec.solver.outer_iters = best;
    MethodOutcome out = finish(spec, ds, proj, realizations);
    out.tuned_param = "iterations";
    out.tuned_value = best;
    out.convergence = std::move(first);
    return out;
}

} // namespace

ProtocolResult run_protocol(const Dataset& ds, const ProtocolConfig& cfg)
{
    const Projector proj(ds.recon_projector);
    const Fidelity fid = ds.experiment == Experiment::ct ? Fidelity::ls : Fidelity::poisson;
    const bool regions = !ds.masks.empty();

    ProtocolResult res;
    res.experiment = ds.experiment;
    for (const auto& m : ds.masks)
        res.region_labels.push_back(m.label);

    MethodSpec base;
    base.fidelity = fid;
    base.solver = cfg.solver;
    base.beta = cfg.beta;

    MethodSpec plain = base;
    plain.method = fid == Fidelity::ls ? Method::cgls : Method::mlem;
    if (!cfg.tv_and_el_only)
        res.methods.push_back(cfg.baseline_at_best_iteration
                                  ? finish_at_best_iteration(plain, ds, proj, cfg.realizations, regions)
                                  : finish(plain, ds, proj, cfg.realizations));

    auto tune = [&](MethodSpec m, SweepParam p, std::optional<double> fixed) {
        std::optional<SweepResult> sweep;
        double value = 0.0;
        if (fixed) {
            value = *fixed;
        } else {
            SweepSpec s;
            s.base = m;
            s.param = p;
            s.realizations = cfg.realizations;
            s.select_by_regions = regions;
            s.values = log_grid(parameter_scale(m, p, ds, proj, cfg.realizations.front()), cfg.sweep_decades, cfg.sweep_points);
            // μ = 0 is covered exactly by the TV outcome, so a μ sweep never
            // walks further down.
            sweep = run_extending_sweep(s, ds, proj, cfg.max_extensions, p != SweepParam::mu);
            if (p == SweepParam::mu)
                add_tv_limit(*sweep, res.methods.back(), regions);
            value = sweep->best_value();
        }
        if (p == SweepParam::alpha)
            m.alpha = value;
        else
            m.mu = value;
        MethodOutcome out;
        if (p == SweepParam::mu && value == 0.0) {
            out = res.methods.back();
            out.spec = m;
        } else {
            out = finish(m, ds, proj, cfg.realizations);
        }
        out.sweep = std::move(sweep);
        out.tuned_param = to_string(p);
        out.tuned_value = value;
        return out;
    };

    MethodSpec tv = base;
    tv.method = Method::tv;
    res.methods.push_back(tune(tv, SweepParam::alpha, cfg.alpha_tv));
    const double alpha_tv = res.methods.back().spec.alpha;

    if (!cfg.tv_and_el_only) {
        MethodSpec tvl2 = base;
        tvl2.method = Method::tvl2;
        tvl2.alpha = alpha_tv;
        res.methods.push_back(tune(tvl2, SweepParam::mu, cfg.mu_tvl2));
    }

    MethodSpec el = base;
    el.method = Method::el;
    res.methods.push_back(tune(el, SweepParam::alpha, cfg.alpha_el));
    return res;
}

std::string convergence_csv(const std::vector<IterationRecord>& history)
{
    std::string out = "iter,objective,fidelity,penalty,step_norm2,rmse\n";
    for (const auto& r : history) {
        out += std::to_string(r.iter) + "," + format_double(r.objective) + "," + format_double(r.fidelity) + "," +
               format_double(r.penalty) + "," + format_double(r.step_norm2) + "," + (r.rmse ? format_double(*r.rmse) : "") + "\n";
    }
    return out;
}

std::string sweep_csv(const SweepResult& sweep)
{
    std::size_t nreal = 0;
    std::size_t nreg = 0;
    for (const auto& p : sweep.points) {
        nreal = std::max(nreal, p.rmse_per_realization.size());
        nreg = std::max(nreg, p.region_means.size());
    }
    std::string out = "parameter,value,mean_rmse";
    for (std::size_t k = 0; k < nreg; ++k)
        out += ",region" + std::to_string(k) + "_mean";
    for (std::size_t r = 0; r < nreal; ++r)
        out += ",rmse_r" + std::to_string(r);
    out += ",selected\n";
    for (std::size_t i = 0; i < sweep.points.size(); ++i) {
        const auto& p = sweep.points[i];
        out += to_string(sweep.param) + "," + format_double(p.value) + "," + (p.ok ? format_double(p.mean_rmse) : "");
        for (std::size_t k = 0; k < nreg; ++k)
            out += "," + (k < p.region_means.size() ? format_double(p.region_means[k]) : "");
        for (std::size_t r = 0; r < nreal; ++r)
            out += "," + (r < p.rmse_per_realization.size() ? format_double(p.rmse_per_realization[r]) : "");
        out += std::string(",") + (i == sweep.argmin ? "1" : "0") + "\n";
    }
    return out;
}

void emit_report(const ProtocolResult& result, const std::filesystem::path& out_dir)
{
    if (result.methods.empty())
        throw ConfigError("nothing to report");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec)
        throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    std::string table = "method,best_parameter,rmse,alpha,mu,beta\n";
    for (const auto& m : result.methods) {
        const auto& s = m.spec;
        table += s.label() + "," + (m.tuned_value ? format_double(*m.tuned_value) : "") + "," + format_double(m.mean_rmse) + "," +
                 (s.regularized() ? format_double(s.alpha) : "") + "," + (s.method == Method::tvl2 ? format_double(s.mu) : "") + "," +
                 (s.method == Method::el ? format_double(s.beta) : "") + "\n";
        const std::string id = to_string(s.method);
        if (!m.runs.empty()) {
            write_file(out_dir / ("convergence_" + id + ".csv"), convergence_csv(m.convergence ? *m.convergence : m.runs.front().history));
            write_image(out_dir / ("recon_" + id + ".img"), m.runs.front().image);
            write_pgm(out_dir / ("recon_" + id + ".pgm"), m.runs.front().image);
        }
        if (m.sweep)
            write_file(out_dir / ("sweep_" + id + ".csv"), sweep_csv(*m.sweep));
    }
    write_file(out_dir / "table.csv", table);

    if (!result.region_labels.empty()) {
        std::string header = "method";
        for (const auto& l : result.region_labels) {
            std::string lower = l;
            std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
            header += "," + lower + "_mean";
        }
        std::string regions = header + "\n";
        for (const auto& m : result.methods) {
            regions += m.spec.label();
            for (double v : m.region_means)
                regions += "," + format_double(v);
            regions += "\n";
        }
        write_file(out_dir / "region_rmse.csv", regions);
    }
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text)
{
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ','))
            cells.push_back(cell);
        if (!line.empty() && line.back() == ',')
            cells.emplace_back();
        rows.push_back(std::move(cells));
    }
    return rows;
}

} // namespace tomo
