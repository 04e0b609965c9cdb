#include "dislocore/pipeline.hpp"

#include "dislocore/errors.hpp"

namespace dislo {

ProblemConfig silicon_edge_config() { return {}; }

ProblemConfig toy_edge_config()
{
    ProblemConfig c;
    c.crystal = "toy";
    c.potential = "toy";
    c.burgers = Vec3(1.0, 0.0, 0.0);
    c.line = Vec3(0.0, 0.0, 1.0);
    return c;
}

std::unique_ptr<Problem> make_lattice_problem(const ProblemConfig& cfg)
{
    auto p = std::make_unique<Problem>();
    p->config = cfg;
    MultilatticeSpec spec;
    double range = cfg.stencil_range;
    if (cfg.crystal == "silicon") {
        spec = silicon_spec();
        if (range <= 0) range = 1.5;
    } else if (cfg.crystal == "toy") {
        spec = toy_spec();
        if (range <= 0) range = 1.01;
    } else {
        spec = load_crystal(cfg.crystal);
        if (range <= 0) throw usage_error("a stencil range is required for a crystal file");
    }
    DislocationFrame fr = build_frame(spec, cfg.burgers, cfg.line);
    p->ml = project(spec, fr);
    place_core(p->ml, cfg.core_offset);
    check_burgers_alignment(p->ml);
    p->st = build_stencil(p->ml, range);
    p->V = make_potential(cfg.potential, spec);
    const Vec3 b = p->ml.frame.burgers;
    p->r_hat = cfg.r_hat > 0 ? cfg.r_hat : 4.0 * b.norm();
    return p;
}

std::unique_ptr<Problem> make_problem(const ProblemConfig& cfg)
{
    auto p = make_lattice_problem(cfg);
    p->cbd = cb_derivatives(*p->V, p->st);
    p->C = elastic_tensor(p->cbd);
    const Vec3 b = p->ml.frame.burgers;
    ElasticTensor C = p->C;
    if (cfg.mode == TensorSource::Table) {
        auto voigt = cfg.table.empty() ? silicon_voigt_table() : read_voigt_table(cfg.table);
        C = tensor_from_voigt(voigt, p->ml.frame.rotation);
    }
    CLESolution cle = solve_cle(cfg.mode, C, b, p->ml.frame.core, cfg.nu);
    p->predictor = std::make_unique<Predictor>(std::move(cle), CoreMap(p->ml.frame.b12(), p->ml.frame.core, p->r_hat),
                                               p->cbd);
    return p;
}

Cell make_cell(const Problem& p, double R)
{
    Cell c;
    c.R = R;
    c.domain = std::make_unique<Domain>(build_domain(p.ml, p.st, R, p.r_hat));
    EnergyOptions opt;
    opt.threads = p.config.threads;
    c.model = std::make_unique<EnergyModel>(p.V, p.st, *c.domain, sample_predictor(*p.predictor, *c.domain),
                                            p.ml.frame.burgers, opt);
    return c;
}

} // namespace dislo
