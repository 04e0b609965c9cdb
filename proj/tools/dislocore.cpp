#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iomanip>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dislocore/analysis.hpp"
#include "dislocore/cbmodel.hpp"
#include "dislocore/errors.hpp"
#include "dislocore/pipeline.hpp"
#include "dislocore/solver.hpp"

#ifndef DISLOCORE_VERSION
#define DISLOCORE_VERSION "0.1.0-unknown"
#endif

using namespace dislo;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kOk = 0, kScientific = 2, kUsage = 64, kIO = 74;

struct RunConfig {
    std::string crystal = "silicon";
    std::string potential = "sw-si";
    std::vector<double> burgers{-0.5, 0.5, 0.0};
    std::vector<double> line{1.0, 1.0, 2.0};
    std::vector<double> core_offset{0.25, 0.25};
    double rcut = 0.0;
    double r_hat = 0.0;
    std::string mode = "cb";
    double nu = 0.22;
    std::string elastic_table;
    int threads = 0;
    unsigned seed = 1;
    std::string out = "out";
    double radius = 0.0;   // 0 picks the command default
    std::vector<double> radii{10, 14, 20, 28, 40, 56};
    std::string method = "lbfgs";
    double force_tol = 1e-8;
    int max_iter = 20000;
    int history = 10;
    std::vector<double> window{12, 60};
    int grid = 32;
    int supercell = 256;
    std::vector<double> green_window{8, 64};
    bool xyz = false;
    bool verbose = false;
};

json to_json(const RunConfig& c)
{
    return json{{"crystal", c.crystal},     {"potential", c.potential}, {"burgers", c.burgers},
                {"line", c.line},           {"core_offset", c.core_offset}, {"rcut", c.rcut},
                {"r_hat", c.r_hat},         {"mode", c.mode},           {"nu", c.nu},
                {"elastic_table", c.elastic_table}, {"seed", c.seed},   {"radius", c.radius},
                {"radii", c.radii},         {"method", c.method},       {"force_tol", c.force_tol},
                {"max_iter", c.max_iter},   {"history", c.history},     {"window", c.window},
                {"grid", c.grid},           {"supercell", c.supercell}, {"green_window", c.green_window}};
}

template <class T>
void take(const json& j, const char* key, T& v)
{
    if (j.contains(key)) v = j.at(key).get<T>();
}

void load_config(const std::string& path, RunConfig& c)
{
    if (!fs::exists(path)) throw usage_error("config file " + path + " does not exist");
    std::ifstream in(path);
    if (!in) throw io_error("cannot read config file " + path);
    json j;
    try {
        in >> j;
        take(j, "crystal", c.crystal);
        take(j, "potential", c.potential);
        take(j, "burgers", c.burgers);
        take(j, "line", c.line);
        take(j, "core_offset", c.core_offset);
        take(j, "rcut", c.rcut);
        take(j, "r_hat", c.r_hat);
        take(j, "mode", c.mode);
        take(j, "nu", c.nu);
        take(j, "elastic_table", c.elastic_table);
        take(j, "threads", c.threads);
        take(j, "seed", c.seed);
        take(j, "out", c.out);
        take(j, "radius", c.radius);
        take(j, "radii", c.radii);
        take(j, "window", c.window);
        take(j, "grid", c.grid);
        take(j, "supercell", c.supercell);
        take(j, "green_window", c.green_window);
        if (j.contains("solver")) {
            const json& s = j["solver"];
            take(s, "method", c.method);
            take(s, "force_tol", c.force_tol);
            take(s, "max_iter", c.max_iter);
            take(s, "history", c.history);
        }
    } catch (const json::exception& e) {
        throw usage_error("bad config file " + path + ": " + e.what());
    }
    // file references are relative to the config file
    const fs::path dir = fs::path(path).parent_path();
    auto resolve = [&](std::string& f) {
        if (!f.empty() && fs::path(f).is_relative()) f = (dir / f).lexically_normal().string();
    };
    if (c.crystal != "silicon" && c.crystal != "toy") resolve(c.crystal);
    resolve(c.elastic_table);
}

// FNV-1a over the canonical JSON of the effective configuration
std::string config_hash(const RunConfig& c)
{
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : to_json(c).dump()) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << h;
    return s.str();
}

std::string provenance(const RunConfig& c, const std::string& command)
{
    std::ostringstream s;
    s << "# dislocore " << DISLOCORE_VERSION << " " << command << "\n";
    s << "# config_hash " << config_hash(c) << "\n";
    s << "# config " << to_json(c).dump() << "\n";
    return s.str();
}

Vec3 vec3(const std::vector<double>& v, const char* what)
{
    if (v.size() != 3) throw usage_error(std::string(what) + " needs 3 components");
    return Vec3(v[0], v[1], v[2]);
}

Vec2 vec2(const std::vector<double>& v, const char* what)
{
    if (v.size() != 2) throw usage_error(std::string(what) + " needs 2 components");
    return Vec2(v[0], v[1]);
}

void validate(const RunConfig& c)
{
    if (c.crystal != "silicon" && c.crystal != "toy" && !fs::exists(c.crystal))
        throw usage_error("crystal file " + c.crystal + " does not exist");
    if (!c.elastic_table.empty() && !fs::exists(c.elastic_table))
        throw usage_error("elastic table " + c.elastic_table + " does not exist");
    if (c.radii.empty()) throw usage_error("radii list is empty");
    for (size_t i = 1; i < c.radii.size(); ++i)
        if (!(c.radii[i] > c.radii[i - 1])) throw usage_error("radii must be strictly ascending");
    vec2(c.window, "window");
    vec2(c.green_window, "green window");
    parse_method(c.method);
    parse_tensor_source(c.mode);
    if (c.grid < 2 || c.supercell < 4) throw usage_error("grid and supercell sizes are too small");
}

ProblemConfig problem_config(const RunConfig& c)
{
    ProblemConfig p;
    p.crystal = c.crystal;
    p.potential = c.potential;
    p.burgers = vec3(c.burgers, "burgers");
    p.line = vec3(c.line, "line");
    p.core_offset = vec2(c.core_offset, "core offset");
    p.stencil_range = c.rcut;
    p.r_hat = c.r_hat;
    p.mode = parse_tensor_source(c.mode);
    p.nu = c.nu;
    p.table = c.elastic_table;
    p.threads = c.threads;
    return p;
}

SolverConfig solver_config(const RunConfig& c)
{
    SolverConfig s;
    s.method = parse_method(c.method);
    s.force_tol = c.force_tol;
    s.max_iter = c.max_iter;
    s.history = c.history;
    s.verbose = c.verbose;
    return s;
}

std::ofstream open_out(const RunConfig& c, const std::string& name)
{
    std::error_code ec;
    fs::create_directories(c.out, ec);
    if (ec) throw io_error("cannot create output directory " + c.out + ": " + ec.message());
    const fs::path p = fs::path(c.out) / name;
    std::ofstream f(p);
    if (!f) throw io_error("cannot write " + p.string());
    f.precision(12);
    return f;
}

void close_out(std::ofstream& f, const std::string& name)
{
    f.close();
    if (!f) throw io_error("error writing " + name);
}

// key of the stability certificate: only the inputs the scan depends on
std::string certificate_key(const RunConfig& c)
{
    RunConfig k;
    k.crystal = c.crystal;
    k.potential = c.potential;
    k.burgers = c.burgers;
    k.line = c.line;
    k.core_offset = c.core_offset;
    k.rcut = c.rcut;
    k.grid = c.grid;
    return config_hash(k);
}

StabilityReport run_scan(const RunConfig& c, const Problem& p)
{
    StabilityReport rep = stability_scan(DynamicalMatrix(*p.V, p.st), c.grid);
    std::ofstream f = open_out(c, "stability.cert");
    f << certificate_key(c) << "\n" << rep.min_normalized << "\n";
    close_out(f, "stability.cert");
    return rep;
}

void ensure_stable(const RunConfig& c, const Problem& p)
{
    std::ifstream in(fs::path(c.out) / "stability.cert");
    std::string key;
    if (in && std::getline(in, key) && key == certificate_key(c)) return;
    run_scan(c, p);
}

std::unique_ptr<Problem> stable_problem(const RunConfig& c)
{
    const ProblemConfig pc = problem_config(c);
    ensure_stable(c, *make_lattice_problem(pc));
    return make_problem(pc);
}

int cmd_stability(const RunConfig& c)
{
    auto p = make_lattice_problem(problem_config(c));
    StabilityReport rep = run_scan(c, *p);
    std::cout << "stable on a " << rep.grid << "x" << rep.grid << " grid\n"
              << "min normalized eigenvalue " << rep.min_normalized << " at xi = (" << rep.argmin(0) << ", "
              << rep.argmin(1) << ")\n"
              << "|H00(0)| " << rep.h00_at_zero << "\n";
    return kOk;
}

int cmd_predict(const RunConfig& c)
{
    auto p = stable_problem(c);
    const double R = c.radius > 0 ? c.radius : 20.0;
    Domain d = build_domain(p->ml, p->st, R, p->r_hat);
    const int S = p->st.species;
    std::ofstream f = open_out(c, "field.csv");
    f << provenance(c, "predict");
    f << "# core " << d.core(0) << " " << d.core(1) << "\n";
    f << "l1,l2,U1,U2,U3";
    for (int a = 0; a < S; ++a) f << ",p" << a << "_1,p" << a << "_2,p" << a << "_3";
    f << "\n";
    f.precision(17);
    for (int s = 0; s < d.size(); ++s) {
        const Vec2& x = d.sites[s];
        Vec3 U = p->predictor->U0(x);
        std::vector<Vec3> ps = p->predictor->p0(x);
        f << x(0) << "," << x(1) << "," << U(0) << "," << U(1) << "," << U(2);
        for (int a = 0; a < S; ++a) f << "," << ps[a](0) << "," << ps[a](1) << "," << ps[a](2);
        f << "\n";
    }
    close_out(f, "field.csv");
    std::cout << "wrote " << d.size() << " sites to " << (fs::path(c.out) / "field.csv").string() << "\n";
    return kOk;
}

void print_result(const RelaxResult& r, double R)
{
    std::cout << "R " << R << ": " << r.status << " after " << r.iterations << " iterations, energy " << r.energy
              << ", max force " << r.final_force_inf << "\n";
}

int cmd_relax(const RunConfig& c)
{
    auto p = stable_problem(c);
    Cell cell = make_cell(*p, c.radius > 0 ? c.radius : 20.0);
    RelaxResult r = relax(*cell.model, solver_config(c));
    print_result(r, cell.R);
    if (int w = cell.model->admissibility_warnings(r.field)) std::cerr << "warning: " << w << " sites beyond the admissibility bounds\n";

    const Domain& d = *cell.domain;
    const int S = p->st.species;
    std::ofstream f = open_out(c, "relax.csv");
    f << provenance(c, "relax");
    f << "# status " << r.status << " iterations " << r.iterations << " energy " << r.energy << " max_force "
      << r.final_force_inf << "\n";
    f << "l1,l2,interior,U1,U2,U3";
    for (int a = 1; a < S; ++a) f << ",p" << a << "_1,p" << a << "_2,p" << a << "_3";
    f << "\n";
    f.precision(17);
    for (int s = 0; s < d.size(); ++s) {
        Vec3 U = r.field.U(s);
        f << d.sites[s](0) << "," << d.sites[s](1) << "," << int(d.interior[s]) << "," << U(0) << "," << U(1) << ","
          << U(2);
        for (int a = 1; a < S; ++a) {
            Vec3 q = r.field.p(s, a);
            f << "," << q(0) << "," << q(1) << "," << q(2);
        }
        f << "\n";
    }
    close_out(f, "relax.csv");
    if (c.xyz) {
        std::ofstream x = open_out(c, "relax.xyz");
        write_xyz(x, *cell.model, p->ml, r.field, "dislocore " DISLOCORE_VERSION " config_hash " + config_hash(c));
        close_out(x, "relax.xyz");
    }
    return r.converged ? kOk : kScientific;
}

int cmd_converge(const RunConfig& c)
{
    if (c.radii.size() < 4) throw usage_error("a convergence study needs at least 4 radii");
    auto p = stable_problem(c);
    std::vector<Cell> cells;
    std::vector<const EnergyModel*> ms;
    for (double R : c.radii) {
        cells.push_back(make_cell(*p, R));
        ms.push_back(cells.back().model.get());
    }
    auto rs = hierarchy_relax(ms, solver_config(c));
    for (size_t i = 0; i < rs.size(); ++i) print_result(rs[i], c.radii[i]);
    ConvergenceTable t = convergence_study(ms, rs, p->st, c.seed);
    std::ofstream f = open_out(c, "conv.csv");
    write_convergence_csv(f, t, provenance(c, "converge"));
    close_out(f, "conv.csv");
    std::ofstream g = open_out(c, "conv.plt");
    write_convergence_plt(g, "conv.csv");
    close_out(g, "conv.plt");
    std::cout << "self-convergence slope " << t.slope << " +- " << t.slope_halfwidth << "\n";
    return kOk;
}

void report_fits(const std::vector<DecayFit>& fits)
{
    for (const auto& f : fits)
        std::cout << f.name << ": slope " << f.slope << " (max-based " << f.slope_max << ", r2 " << f.r2 << ")\n";
}

int cmd_decay(const RunConfig& c)
{
    auto p = stable_problem(c);
    Cell cell = make_cell(*p, c.radius > 0 ? c.radius : 80.0);
    const DecayWindow w{c.window[0], c.window[1]};
    std::vector<DecayFit> fits = residual_decay_report(*cell.model, w);
    for (auto& f : predictor_rate_report(*cell.model, w)) fits.push_back(f);
    {
        // predictor-only corrector series: S0 applied to u0 itself
        SiteSeries du0 = predictor_dtilde_series(*cell.model);
        fits.push_back(decay_fit(du0.r, du0.q, w.r_min, w.r_max, false, "DU0"));
    }
    RelaxResult r = relax(*cell.model, solver_config(c));
    print_result(r, cell.R);
    for (auto& f : strain_decay_report(*cell.model, r, w)) fits.push_back(f);
    report_fits(fits);
    std::ofstream f = open_out(c, "decay.csv");
    write_decay_csv(f, fits, provenance(c, "decay"));
    close_out(f, "decay.csv");
    std::ofstream g = open_out(c, "decay.plt");
    write_decay_plt(g, "decay.csv", fits);
    close_out(g, "decay.plt");
    return kOk;
}

int cmd_green(const RunConfig& c)
{
    auto p = stable_problem(c);
    DynamicalMatrix H(*p->V, p->st);
    GreenSupercell G = greens_supercell(H, c.supercell);
    auto fits = green_decay_report(G, p->ml.A, c.green_window[0], c.green_window[1]);
    report_fits(fits);
    std::ofstream f = open_out(c, "green.csv");
    write_decay_csv(f, fits, provenance(c, "green"));
    close_out(f, "green.csv");
    std::ofstream g = open_out(c, "green.plt");
    write_decay_plt(g, "green.csv", fits);
    close_out(g, "green.plt");
    return kOk;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Lattice statics of straight dislocations in multilattices"};
    app.set_version_flag("--version", std::string(DISLOCORE_VERSION));
    app.require_subcommand(1);

    std::string config_file;
    RunConfig flags;
    app.add_option("--config", config_file, "JSON run configuration; flags override it");
    struct Opt {
        CLI::Option* o;
        std::function<void(RunConfig&)> apply;
    };
    std::vector<Opt> opts;
    auto add = [&](const std::string& name, auto RunConfig::*member, const std::string& help) {
        auto* o = app.add_option(name, flags.*member, help);
        opts.push_back({o, [&flags, member](RunConfig& c) { c.*member = flags.*member; }});
        return o;
    };
    add("--crystal", &RunConfig::crystal, "silicon, toy or a crystal JSON file");
    add("--potential", &RunConfig::potential, "sw-si, toy or toy-flipped");
    add("--burgers", &RunConfig::burgers, "Burgers vector, crystal axes")->expected(3)->delimiter(',');
    add("--line", &RunConfig::line, "line direction, crystal axes")->expected(3)->delimiter(',');
    add("--core-offset", &RunConfig::core_offset, "core position in projected cell units")->expected(2)->delimiter(',');
    add("--rcut", &RunConfig::rcut, "stencil range in lattice units (0 = builtin)");
    add("--r-hat", &RunConfig::r_hat, "core regularization radius (0 = 4|b|)");
    add("--mode", &RunConfig::mode, "predictor tensor: cb, isotropic or table");
    add("--nu", &RunConfig::nu, "Poisson ratio for the isotropic predictor");
    add("--elastic-table", &RunConfig::elastic_table, "21 Voigt constants, upper triangle");
    add("--threads", &RunConfig::threads, "worker threads (0 = logical cores)");
    add("--seed", &RunConfig::seed, "seed for every stochastic choice");
    add("--out", &RunConfig::out, "output directory");
    add("--radius", &RunConfig::radius, "domain radius");
    add("--radii", &RunConfig::radii, "ascending radii for converge")->delimiter(',');
    add("--method", &RunConfig::method, "lbfgs or nonlinear-cg");
    add("--force-tol", &RunConfig::force_tol, "max-norm force tolerance");
    add("--max-iter", &RunConfig::max_iter, "iteration limit");
    add("--window", &RunConfig::window, "decay fit window r_min,r_max")->expected(2)->delimiter(',');
    add("--grid", &RunConfig::grid, "Brillouin grid size for the stability scan");
    add("--supercell", &RunConfig::supercell, "periodic supercell size for green");
    add("--green-window", &RunConfig::green_window, "Green decay window")->expected(2)->delimiter(',');
    bool xyz = false, verbose = false;
    app.add_flag("--xyz", xyz, "relax: also write an extended XYZ file");
    app.add_flag("-v,--verbose", verbose, "solver progress on stderr");

    auto* stability = app.add_subcommand("stability", "phonon stability scan and certificate");
    auto* predict = app.add_subcommand("predict", "sample the predictor on a domain");
    auto* relax_cmd = app.add_subcommand("relax", "relax the core corrector");
    auto* converge = app.add_subcommand("converge", "self-convergence over a list of radii");
    auto* decay = app.add_subcommand("decay", "decay fits of forces, predictor strains and corrector");
    auto* green = app.add_subcommand("green", "decay of the lattice Green's function blocks");
    for (auto* s : {stability, predict, relax_cmd, converge, decay, green}) s->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    try {
        RunConfig c;
        if (!config_file.empty()) load_config(config_file, c);
        for (auto& o : opts)
            if (o.o->count() > 0) o.apply(c);
        c.xyz = xyz;
        c.verbose = verbose;
        validate(c);
        if (*stability) return cmd_stability(c);
        if (*predict) return cmd_predict(c);
        if (*relax_cmd) return cmd_relax(c);
        if (*converge) return cmd_converge(c);
        if (*decay) return cmd_decay(c);
        if (*green) return cmd_green(c);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.kind()) {
        case ErrorKind::Usage: return kUsage;
        case ErrorKind::IO: return kIO;
        case ErrorKind::Scientific: return kScientific;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kScientific;
    }
    return kUsage;
}
