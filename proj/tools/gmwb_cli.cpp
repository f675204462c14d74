// gmwb: pricing, dataset generation, surrogate training and checks.

#include <CLI11.hpp>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gmwb/gmwb.hpp"

namespace fs = std::filesystem;
using namespace gmwb;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct GridFlags {
    int steps = 250;
    int space_steps = 250;
    int b_steps = 100;
    std::string mode = "optimal";
    int workers = 1;

    void add(CLI::App* app) {
        app->add_option("--steps", steps, "time steps N (multiple of T)")->capture_default_str();
        app->add_option("--space-steps", space_steps, "z-grid points M")->capture_default_str();
        app->add_option("--b-steps", b_steps, "base-benefit grid intervals N_B")->capture_default_str();
        app->add_option("--mode", mode, "withdrawal strategy")
            ->check(CLI::IsMember({"optimal", "static"}))
            ->capture_default_str();
        app->add_option("--workers", workers, "worker threads")->capture_default_str();
    }

    hpde::GridConfig grid() const {
        hpde::GridConfig g;
        g.time_steps = steps;
        g.space_steps = space_steps;
        g.benefit_steps = b_steps;
        return g;
    }

    hpde::PricingOptions options() const {
        hpde::PricingOptions o;
        o.mode = mode == "static" ? hpde::WithdrawalMode::static_guarantee : hpde::WithdrawalMode::optimal;
        o.workers = workers;
        return o;
    }
};

struct ContractFlags {
    std::string model, contract, mortality;

    void add(CLI::App* app, bool model_required = true) {
        auto* m = app->add_option("--model", model, "model parameter JSON");
        if (model_required) m->required();
        app->add_option("--contract", contract, "contract JSON (P, T, optional G, alpha, kappa)")->required();
        app->add_option("--mortality", mortality, "mortality CSV (year,death_probability); default none");
    }

    std::optional<MortalityTable> mortality_table() const {
        if (mortality.empty()) return std::nullopt;
        return io::load_mortality(mortality);
    }
};

std::string fixed(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, x);
    return buf;
}

std::string sci(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3e", x);
    return buf;
}

Eigen::MatrixXd design_matrix(const std::vector<io::TrainingRow>& rows) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kNumPredictors));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto a = rows[i].point.to_array();
        for (std::size_t k = 0; k < kNumPredictors; ++k)
            x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = a[k];
    }
    return x;
}

Eigen::VectorXd predictor_vector(const ParameterPoint& p) {
    const auto a = p.to_array();
    return Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

/// Value of a sampled row: price per unit premium, Delta, or the fee rate.
double row_value(const ParameterPoint& point, const io::ContractFile& base, const std::optional<MortalityTable>& mort,
                 const hpde::GridConfig& grid, const hpde::PricingOptions& options, const std::string& target,
                 double tol) {
    const auto contract = make_contract(base.premium, base.maturity, point.alpha, point.kappa, base.guarantee, mort);
    if (target == "fee") {
        FeeOptions fo;
        fo.tolerance = tol;
        auto c = contract;
        return no_arbitrage_fee(
                   [&](double a) {
                       c.alpha = a;
                       return hpde::price_gmwb(point.model, c, grid, options).price;
                   },
                   contract.premium, fo)
            .alpha;
    }
    const auto r = hpde::price_gmwb(point.model, contract, grid, options);
    return target == "delta" ? r.delta : r.price / contract.premium;
}

int cmd_price(const ContractFlags& cf, const GridFlags& gf, std::optional<double> account) {
    const auto model = io::load_model(cf.model);
    const auto contract = io::merge_contract(model, io::load_contract(cf.contract), cf.mortality_table());
    auto options = gf.options();
    options.initial_account = account;
    const auto t0 = Clock::now();
    const auto r = hpde::price_gmwb(model.params, contract, gf.grid(), options);
    const double elapsed = seconds_since(t0);
    std::cout << "price " << fixed(r.price, 6) << "\n"
              << "delta " << fixed(r.delta, 6) << "\n"
              << "time_s " << fixed(elapsed, 3) << "\n";
    return 0;
}

int cmd_fee(const ContractFlags& cf, const GridFlags& gf, const std::string& engine, double tol) {
    const auto model = io::load_model(cf.model);
    const auto cfile = io::load_contract(cf.contract);
    const auto mort = cf.mortality_table();
    const double placeholder_alpha = 0.0;
    auto contract = io::merge_contract(model, cfile, mort, placeholder_alpha);
    FeeOptions fo;
    fo.tolerance = tol;
    const auto t0 = Clock::now();
    FeeResult res;
    if (engine == "hpde") {
        const auto grid = gf.grid();
        const auto options = gf.options();
        res = no_arbitrage_fee(
            [&](double a) {
                contract.alpha = a;
                return hpde::price_gmwb(model.params, contract, grid, options).price;
            },
            contract.premium, fo);
    } else {
        const auto surrogate = io::load_gpr(engine);
        ParameterPoint point{model.params, 0.0, contract.kappa};
        res = no_arbitrage_fee(
            [&](double a) {
                point.alpha = a;
                return contract.premium * surrogate.predict(predictor_vector(point));
            },
            contract.premium, fo);
    }
    const double elapsed = seconds_since(t0);
    std::cout << "fee_bps " << fixed(res.bps(), 4) << "\n"
              << "value_at_fee " << fixed(res.value, 6) << "\n"
              << "evaluations " << res.evaluations << "\n"
              << "time_s " << fixed(elapsed, 3) << "\n";
    return 0;
}

struct GenDataFlags {
    std::string box, out, target = "price", sampler = "faure", contract;
    std::size_t n = 0;
    std::uint64_t offset = 1;
    std::uint64_t seed = 1;
    double tol = 1e-3;
};

int cmd_gen_data(const GenDataFlags& g, const GridFlags& gf, const std::string& mortality_path) {
    const auto box = io::load_box(g.box);
    io::ContractFile base;
    base.premium = 100.0;
    base.maturity = 10;
    if (!g.contract.empty()) base = io::load_contract(g.contract);
    std::optional<MortalityTable> mort;
    if (!mortality_path.empty()) mort = io::load_mortality(mortality_path);

    std::vector<ParameterPoint> points;
    if (g.sampler == "faure") {
        const qmc::FaureGenerator gen(static_cast<int>(kNumPredictors));
        for (std::size_t i = 0; i < g.n; ++i) points.push_back(box.map(gen.point(g.offset + i)));
    } else {
        std::mt19937_64 rng(g.seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (std::size_t i = 0; i < g.n; ++i) {
            std::array<double, kNumPredictors> a{};
            for (auto& x : a) x = u(rng);
            points.push_back(box.map(a));
        }
    }

    const auto grid = gf.grid();
    auto options = gf.options();
    options.workers = 1;
    std::vector<io::TrainingRow> rows(points.size());
    parallel_for(points.size(), gf.workers, [&](int, std::size_t i) {
        rows[i] = {points[i], row_value(points[i], base, mort, grid, options, g.target, g.tol)};
    });
    io::write_atomically(g.out, io::format_training(rows));
    std::cout << "wrote " << rows.size() << " rows to " << g.out << "\n";
    return 0;
}

int cmd_train(const std::string& data, const std::string& box_path, const std::string& out, int restarts,
              unsigned seed) {
    const auto rows = io::load_training(data);
    const auto box = io::load_box(box_path);
    Eigen::VectorXd lo(kNumPredictors), hi(kNumPredictors), y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < kNumPredictors; ++k) {
        lo(static_cast<Eigen::Index>(k)) = box[k].lo;
        hi(static_cast<Eigen::Index>(k)) = box[k].hi;
    }
    for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = rows[i].value;
    gpr::TrainOptions opt;
    opt.restarts = restarts;
    opt.seed = seed;
    const auto t0 = Clock::now();
    const auto model = gpr::GprModel::train(design_matrix(rows), y, lo, hi, opt);
    io::save_gpr(model, out);
    std::cout << "trained on " << rows.size() << " rows, log likelihood " << fixed(model.log_likelihood(), 4)
              << ", time_s " << fixed(seconds_since(t0), 3) << "\n";
    return 0;
}

int cmd_predict(const std::string& gpr_path, const std::string& data, const std::string& out) {
    const auto model = io::load_gpr(gpr_path);
    auto rows = io::load_training(data);
    std::size_t outside = 0;
    for (auto& r : rows) {
        const auto x = predictor_vector(r.point);
        if (model.extrapolates(x)) ++outside;
        r.value = model.predict(x);
    }
    if (outside) std::cerr << "warning: " << outside << " points lie outside the training box\n";
    io::write_atomically(out, io::format_training(rows));
    std::cout << "wrote " << rows.size() << " predictions to " << out << "\n";
    return 0;
}

int cmd_evaluate(const std::string& gpr_path, const std::string& data, const GridFlags& gf, int timing_samples,
                 const std::string& contract_path, const std::string& mortality_path, const std::string& target) {
    const auto model = io::load_gpr(gpr_path);
    const auto rows = io::load_training(data);
    std::vector<double> pred, truth;
    const auto t0 = Clock::now();
    for (const auto& r : rows) pred.push_back(model.predict(predictor_vector(r.point)));
    const double predict_time = seconds_since(t0) / static_cast<double>(rows.size());
    for (const auto& r : rows) truth.push_back(r.value);
    const auto m = gpr::evaluate(pred, truth);
    std::cout << "n " << rows.size() << "\n"
              << "RMSE " << sci(m.rmse) << "\n"
              << "RMSRE " << sci(m.rmsre) << "\n"
              << "MaxAE " << sci(m.max_ae) << "\n"
              << "MaxRE " << sci(m.max_re) << "\n"
              << "predict_time_s " << sci(predict_time) << "\n";
    if (timing_samples > 0) {
        io::ContractFile base;
        base.premium = 100.0;
        base.maturity = 10;
        if (!contract_path.empty()) base = io::load_contract(contract_path);
        std::optional<MortalityTable> mort;
        if (!mortality_path.empty()) mort = io::load_mortality(mortality_path);
        const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(timing_samples), rows.size());
        const auto t1 = Clock::now();
        for (std::size_t i = 0; i < k; ++i)
            row_value(rows[i].point, base, mort, gf.grid(), gf.options(), target, 1e-3);
        const double direct = seconds_since(t1) / static_cast<double>(k);
        std::cout << "direct_time_s " << sci(direct) << "\n"
                  << "speedup " << sci(direct / predict_time) << "\n";
    }
    return 0;
}

int cmd_mc_check(const ContractFlags& cf, const GridFlags& gf, std::int64_t paths, std::uint64_t seed,
                 int steps_per_year) {
    const auto model = io::load_model(cf.model);
    const auto contract = io::merge_contract(model, io::load_contract(cf.contract), cf.mortality_table());
    mc::McConfig mcfg;
    mcfg.paths = paths;
    mcfg.seed = seed;
    mcfg.steps_per_year = steps_per_year;
    mcfg.workers = gf.workers;

    bool ok = true;
    const auto est = mc::static_gmwb_price(model.params, contract, mcfg);
    auto options = gf.options();
    options.mode = hpde::WithdrawalMode::static_guarantee;
    const auto hp = hpde::price_gmwb(model.params, contract, gf.grid(), options);
    const double tol = std::max(3.0 * est.std_error, 1e-3 * contract.premium);
    const bool price_ok = std::abs(hp.price - est.mean) <= tol;
    ok = ok && price_ok;
    std::cout << "static_mc " << fixed(est.mean, 6) << " +- " << fixed(est.std_error, 6) << "\n"
              << "static_hpde " << fixed(hp.price, 6) << "\n"
              << "static_check " << (price_ok ? "PASS" : "FAIL") << " |diff| " << fixed(std::abs(hp.price - est.mean), 6)
              << " tol " << fixed(tol, 6) << "\n";
    std::vector<int> maturities;
    for (int t : {1, 5, 10})
        if (t <= contract.maturity) maturities.push_back(t);
    const auto bonds = mc::bond_prices(model.params, maturities, mcfg);
    for (std::size_t q = 0; q < maturities.size(); ++q) {
        const int t = maturities[q];
        const auto& b = bonds[q];
        const double exact = flat_curve_discount(t, model.params);
        const bool bond_ok = std::abs(b.mean - exact) <= 3.0 * b.std_error;
        ok = ok && bond_ok;
        std::cout << "bond t=" << t << " mc " << fixed(b.mean, 8) << " +- " << fixed(b.std_error, 8) << " exact "
                  << fixed(exact, 8) << " " << (bond_ok ? "PASS" : "FAIL") << "\n";
    }
    std::cout << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"GMWB pricing under Heston Hull-White: lattice/PDE pricer, GPR surrogate, Monte Carlo checks"};
    app.require_subcommand(1);

    ContractFlags price_cf, fee_cf, mc_cf;
    GridFlags price_gf, fee_gf, gen_gf, eval_gf, mc_gf;

    auto* price = app.add_subcommand("price", "price the contract with the hybrid pricer");
    price_cf.add(price);
    price_gf.add(price);
    std::optional<double> account;
    price->add_option("--account", account, "initial account value (default: the premium)");

    auto* fee = app.add_subcommand("fee", "no-arbitrage fee in basis points");
    fee_cf.add(fee);
    fee_gf.add(fee);
    std::string engine = "hpde";
    double fee_tol = 1e-3;
    fee->add_option("--engine", engine, "'hpde' or the path of a trained price surrogate")->capture_default_str();
    fee->add_option("--tol", fee_tol, "relative tolerance on |V - P| / P")->capture_default_str();

    auto* gen = app.add_subcommand("gen-data", "price sampled parameter points into a training CSV");
    GenDataFlags gd;
    std::string gen_mortality;
    gen->add_option("--box", gd.box, "parameter box JSON")->required();
    gen->add_option("--n", gd.n, "number of rows")->required();
    gen->add_option("--out", gd.out, "output CSV")->required();
    gen->add_option("--target", gd.target, "value column")
        ->check(CLI::IsMember({"price", "delta", "fee"}))
        ->capture_default_str();
    gen->add_option("--sampler", gd.sampler, "faure points or seeded uniform points")
        ->check(CLI::IsMember({"faure", "random"}))
        ->capture_default_str();
    gen->add_option("--offset", gd.offset, "first Faure index")->capture_default_str();
    gen->add_option("--seed", gd.seed, "seed for the random sampler")->capture_default_str();
    gen->add_option("--contract", gd.contract, "contract JSON for P, T and G (default P = 100, T = 10)");
    gen->add_option("--mortality", gen_mortality, "mortality CSV; default none");
    gen->add_option("--tol", gd.tol, "fee tolerance for --target fee")->capture_default_str();
    gen_gf.add(gen);

    auto* train = app.add_subcommand("train", "fit a GPR surrogate to a training CSV");
    std::string train_data, train_box, train_out;
    int restarts = 5;
    unsigned train_seed = 7;
    train->add_option("--data", train_data, "training CSV")->required();
    train->add_option("--box", train_box, "parameter box JSON used for input scaling")->required();
    train->add_option("--out", train_out, "model JSON")->required();
    train->add_option("--restarts", restarts, "likelihood optimization starts")->capture_default_str();
    train->add_option("--seed", train_seed, "seed for restart perturbations")->capture_default_str();

    auto* predict = app.add_subcommand("predict", "predict values for the rows of a CSV");
    std::string pred_model, pred_data, pred_out;
    predict->add_option("--gpr", pred_model, "model JSON")->required();
    predict->add_option("--data", pred_data, "CSV in the training schema (value column ignored)")->required();
    predict->add_option("--out", pred_out, "output CSV")->required();

    auto* evaluate = app.add_subcommand("evaluate", "error metrics and speed-up against a test CSV");
    std::string eval_model, eval_data, eval_contract, eval_mortality, eval_target = "price";
    int timing_samples = 3;
    evaluate->add_option("--gpr", eval_model, "model JSON")->required();
    evaluate->add_option("--data", eval_data, "test CSV with true values")->required();
    evaluate->add_option("--timing-samples", timing_samples, "rows priced directly for the speed-up (0 to skip)")
        ->capture_default_str();
    evaluate->add_option("--contract", eval_contract, "contract JSON for direct pricing");
    evaluate->add_option("--mortality", eval_mortality, "mortality CSV for direct pricing");
    evaluate->add_option("--target", eval_target, "value column meaning")
        ->check(CLI::IsMember({"price", "delta", "fee"}))
        ->capture_default_str();
    eval_gf.add(evaluate);

    auto* mcc = app.add_subcommand("mc-check", "static-strategy and bond checks against Monte Carlo");
    mc_cf.add(mcc);
    mc_gf.add(mcc);
    std::int64_t paths = 100000;
    std::uint64_t mc_seed = 42;
    int steps_per_year = 100;
    mcc->add_option("--n", paths, "Monte Carlo paths")->capture_default_str();
    mcc->add_option("--seed", mc_seed, "Monte Carlo seed")->capture_default_str();
    mcc->add_option("--steps-per-year", steps_per_year, "Monte Carlo time steps per year")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*price) return cmd_price(price_cf, price_gf, account);
        if (*fee) return cmd_fee(fee_cf, fee_gf, engine, fee_tol);
        if (*gen) return cmd_gen_data(gd, gen_gf, gen_mortality);
        if (*train) return cmd_train(train_data, train_box, train_out, restarts, train_seed);
        if (*predict) return cmd_predict(pred_model, pred_data, pred_out);
        if (*evaluate)
            return cmd_evaluate(eval_model, eval_data, eval_gf, timing_samples, eval_contract, eval_mortality,
                                eval_target);
        if (*mcc) return cmd_mc_check(mc_cf, mc_gf, paths, mc_seed, steps_per_year);
    } catch (const gmwb::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
