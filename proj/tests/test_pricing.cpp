#include <doctest.h>

#include <cmath>
#include <random>

#include <gridshare/errors.hpp>
#include <gridshare/pricing.hpp>

#include "support/instance_gen.hpp"

using namespace gridshare;

namespace {

RadialNetwork one_bus(double v_min = 0.2, double v_max = 2.0) {
    RadialNetwork net;
    net.buses = {{1, 0.0}};
    net.lines = {{0, 1, 0.1, 0.05}};
    net.v0 = 1.0;
    net.v_min = v_min;
    net.v_max = v_max;
    return net;
}

std::vector<Prosumer> one_prosumer(double g, double d_lo = 0.0, double d_hi = 10.0) {
    Prosumer p;
    p.id = 1;
    p.bus = 1;
    p.devices = {{10.0, 2.0, d_lo, d_hi}};
    p.g = g;
    return {p};
}

const Tariff kTariff{4.0, 2.0};

Eigen::VectorXd vec1(double v) {
    Eigen::VectorXd x(1);
    x << v;
    return x;
}

}  // namespace

TEST_CASE("network-adjusted prices shift the flat rate by the dual load") {
    auto sens = build_sensitivities(one_bus());
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);

    CHECK(chi_kappa(sens, kTariff, zero, zero, Regime::Import)[0] == 4.0);
    CHECK(chi_kappa(sens, kTariff, zero, zero, Regime::Export)[0] == 2.0);
    CHECK(chi_kappa(sens, kTariff, zero, zero, Regime::Balanced, 3.0)[0] == 3.0);

    // a binding lower bound raises the price, a binding upper bound lowers it
    CHECK(chi_kappa(sens, kTariff, zero, vec1(10.0), Regime::Import)[0] ==
          doctest::Approx(6.0).epsilon(1e-14));
    CHECK(chi_kappa(sens, kTariff, vec1(5.0), zero, Regime::Export)[0] ==
          doctest::Approx(1.0).epsilon(1e-14));

    CHECK_THROWS_AS(chi_kappa(sens, kTariff, zero, zero, Regime::Balanced), DomainError);
    CHECK_THROWS_AS(chi_kappa(sens, kTariff, Eigen::VectorXd::Zero(3), zero, Regime::Import),
                    DimensionError);
}

TEST_CASE("regime thresholds are total responses at the regime prices") {
    auto sens = build_sensitivities(one_bus());
    ThresholdDuals duals;
    duals.import_up = duals.import_lo = Eigen::VectorXd::Zero(1);
    duals.export_up = duals.export_lo = Eigen::VectorXd::Zero(1);

    auto [s1, s2] = thresholds(sens, one_prosumer(1.0), kTariff, duals);
    CHECK(s1 == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(s2 == doctest::Approx(4.0).epsilon(1e-12));

    SUBCASE("flat tariff collapses the thresholds") {
        Tariff flat{4.0, 4.0};
        auto [a, b] = thresholds(sens, one_prosumer(1.0), flat, duals);
        CHECK(a == doctest::Approx(b).epsilon(1e-12));
    }
    SUBCASE("import duals shrink the first threshold") {
        duals.import_lo = vec1(10.0);  // prices import at 6 instead of 4
        auto [a, b] = thresholds(sens, one_prosumer(1.0), kTariff, duals);
        CHECK(a == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(b == doctest::Approx(4.0).epsilon(1e-12));
    }
    SUBCASE("export envelope caps the threshold") {
        auto pros = one_prosumer(1.0);
        pros[0].envelope = Envelope{-5.0, 1.0};  // consumption capped at z_hi + g = 2
        auto [a, b] = thresholds(sens, pros, kTariff, duals);
        CHECK(a == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(b == doctest::Approx(2.0).epsilon(1e-12));
    }
}

TEST_CASE("balanced price clears the internal market") {
    auto sens = build_sensitivities(one_bus());
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
    auto pros = one_prosumer(0.0);

    CHECK(solve_mu(sens, pros, kTariff, zero, zero, 3.5) == doctest::Approx(3.0).epsilon(1e-8));
    // at the thresholds the balanced price meets the adjacent regime's rate
    CHECK(solve_mu(sens, pros, kTariff, zero, zero, 3.0) == doctest::Approx(4.0).epsilon(1e-8));
    CHECK(solve_mu(sens, pros, kTariff, zero, zero, 4.0) == doctest::Approx(2.0).epsilon(1e-8));

    CHECK_THROWS_AS(solve_mu(sens, pros, kTariff, zero, zero, 100.0), RootBracketError);
}

TEST_CASE("price schedule follows the regime of the central solution") {
    auto sens = build_sensitivities(one_bus());

    SUBCASE("import at the flat purchase rate") {
        auto pros = one_prosumer(0.0);
        auto c = solve_central(sens, pros, kTariff);
        auto sched = ex_ante_prices(sens, pros, kTariff, c);
        CHECK(sched.regime == Regime::Import);
        CHECK(sched.bus_price[0] == doctest::Approx(4.0).epsilon(1e-9));
        CHECK(sched.sigma1 == doctest::Approx(3.0).epsilon(1e-9));
        CHECK(sched.sigma2 == doctest::Approx(4.0).epsilon(1e-9));
        CHECK_FALSE(sched.mu.has_value());
    }
    SUBCASE("balanced at the market-clearing price") {
        auto pros = one_prosumer(3.5);
        auto c = solve_central(sens, pros, kTariff);
        auto sched = ex_ante_prices(sens, pros, kTariff, c);
        CHECK(sched.regime == Regime::Balanced);
        REQUIRE(sched.mu.has_value());
        CHECK(*sched.mu == doctest::Approx(3.0).epsilon(1e-8));
        CHECK(sched.bus_price[0] == doctest::Approx(3.0).epsilon(1e-8));
    }
    SUBCASE("export at the flat sale rate") {
        auto pros = one_prosumer(5.0);
        auto c = solve_central(sens, pros, kTariff);
        auto sched = ex_ante_prices(sens, pros, kTariff, c);
        CHECK(sched.regime == Regime::Export);
        CHECK(sched.bus_price[0] == doctest::Approx(2.0).epsilon(1e-9));
    }
    SUBCASE("binding voltage bound marks up the bus price") {
        auto net = one_bus(std::sqrt(0.6));
        auto snug = build_sensitivities(net);
        auto pros = one_prosumer(0.0);
        auto c = solve_central(snug, pros, kTariff);
        auto sched = ex_ante_prices(snug, pros, kTariff, c);
        CHECK(sched.regime == Regime::Import);
        CHECK(sched.bus_price[0] == doctest::Approx(6.0).epsilon(1e-6));
        CHECK(sched.sigma1 == doctest::Approx(2.0).epsilon(1e-6));
    }
    SUBCASE("missing subproblem data cannot be priced") {
        auto pros = one_prosumer(0.0);
        auto c = solve_central(sens, pros, kTariff);
        c.import_sol.reset();
        CHECK_THROWS_AS(ex_ante_prices(sens, pros, kTariff, c), SolverDiverged);
    }
}

TEST_CASE("settlement rebates the price gap and nets the operator to zero") {
    auto pros = one_prosumer(0.0);
    PriceSchedule sched;
    sched.regime = Regime::Import;
    sched.bus_price = vec1(6.0);
    sched.eta_up_used = sched.eta_lo_used = Eigen::VectorXd::Zero(1);

    SUBCASE("importing coalition pays the purchase rate") {
        auto s = settle(sched, kTariff, pros, vec1(2.0));
        CHECK(s.prosumer_id == std::vector<int>{1});
        CHECK(s.nem_rate == 4.0);
        CHECK(s.ex_ante_charge[0] == doctest::Approx(12.0).epsilon(1e-14));
        CHECK(s.allocation[0] == doctest::Approx(4.0).epsilon(1e-14));
        CHECK(s.final_payment[0] == doctest::Approx(8.0).epsilon(1e-14));
        CHECK(s.nem_cost == doctest::Approx(8.0).epsilon(1e-14));
        CHECK(std::abs(s.operator_balance) < 1e-12);
    }
    SUBCASE("exporting coalition is paid the sale rate") {
        sched.bus_price = vec1(1.0);
        auto s = settle(sched, kTariff, pros, vec1(-2.0));
        CHECK(s.nem_rate == 2.0);
        CHECK(s.final_payment[0] == doctest::Approx(-4.0).epsilon(1e-14));
        CHECK(std::abs(s.operator_balance) < 1e-12);
    }
    SUBCASE("zero net consumption settles on the purchase-side rate") {
        auto s = settle(sched, kTariff, pros, vec1(0.0));
        CHECK(s.nem_rate == 4.0);
        CHECK(s.final_payment[0] == 0.0);
    }
    SUBCASE("cross-subsidies cancel inside the coalition") {
        auto two = one_prosumer(0.0);
        Prosumer q = two[0];
        q.id = 2;
        two.push_back(q);
        Eigen::VectorXd z(2);
        z << 3.0, -1.0;
        sched.bus_price = vec1(6.0);
        auto s = settle(sched, kTariff, two, z);
        CHECK(s.nem_rate == 4.0);
        CHECK(s.final_payment[0] == doctest::Approx(12.0).epsilon(1e-12));
        CHECK(s.final_payment[1] == doctest::Approx(-4.0).epsilon(1e-12));
        CHECK(std::abs(s.operator_balance) < 1e-12);
    }
}

TEST_CASE("posted prices decentralize the worked examples") {
    auto sens = build_sensitivities(one_bus());
    auto pros = one_prosumer(0.0);
    auto rep = verify_equilibrium(sens, pros, kTariff);
    CHECK(rep.pass);
    CHECK(rep.max_deviation < 1e-8);

    auto net = one_bus(std::sqrt(0.6));
    auto snug = build_sensitivities(net);
    auto rep2 = verify_equilibrium(snug, pros, kTariff);
    CHECK(rep2.pass);
    CHECK(rep2.max_deviation < 1e-6);
}

TEST_CASE("a perturbed price schedule fails the equilibrium audit") {
    auto sens = build_sensitivities(one_bus());
    auto pros = one_prosumer(0.0);
    auto c = solve_central(sens, pros, kTariff);
    auto sched = ex_ante_prices(sens, pros, kTariff, c);
    sched.bus_price[0] += 0.01;
    CHECK_THROWS_AS(verify_equilibrium(sched, pros, kTariff, c), EquilibriumViolation);
}

TEST_CASE("threshold order and regime selection on random instances") {
    std::mt19937 rng(61);
    for (int trial = 0; trial < 40; ++trial) {
        auto inst = testsupport::random_instance(rng);
        auto sens = build_sensitivities(inst.net);
        CentralSolution c;
        try {
            c = solve_central(sens, inst.prosumers, inst.tariff);
        } catch (const Infeasible&) {
            continue;
        }
        auto sched = ex_ante_prices(sens, inst.prosumers, inst.tariff, c);
        CHECK(sched.sigma1 <= sched.sigma2 + 1e-12);

        double G0 = 0.0;
        for (const auto& p : inst.prosumers) G0 += p.g;
        if (G0 < sched.sigma1 - 1e-7) CHECK(sched.regime == Regime::Import);
        if (G0 > sched.sigma2 + 1e-7) CHECK(sched.regime == Regime::Export);
        if (G0 > sched.sigma1 + 1e-7 && G0 < sched.sigma2 - 1e-7)
            CHECK(sched.regime == Regime::Balanced);
        if (sched.regime == Regime::Balanced) {
            REQUIRE(sched.mu.has_value());
            double lo = inst.tariff.pi_minus - 1e-9, hi = inst.tariff.pi_plus + 1e-9;
            if (sched.eta_up_used.cwiseAbs().maxCoeff() < 1e-12 &&
                sched.eta_lo_used.cwiseAbs().maxCoeff() < 1e-12) {
                CHECK(*sched.mu >= lo);
                CHECK(*sched.mu <= hi);
            }
        }
    }
}

TEST_CASE("settlement invariants hold at the realized best responses") {
    std::mt19937 rng(67);
    for (int trial = 0; trial < 40; ++trial) {
        auto inst = testsupport::random_instance(rng);
        auto sens = build_sensitivities(inst.net);
        CentralSolution c;
        try {
            c = solve_central(sens, inst.prosumers, inst.tariff);
        } catch (const Infeasible&) {
            continue;
        }
        auto sched = ex_ante_prices(sens, inst.prosumers, inst.tariff, c);

        Eigen::VectorXd z(inst.prosumers.size());
        for (size_t n = 0; n < inst.prosumers.size(); ++n) {
            z[n] = best_response_enveloped(inst.prosumers[n],
                                           sched.bus_price[inst.prosumers[n].bus - 1])
                       .z;
        }
        auto s = settle(sched, inst.tariff, inst.prosumers, z);
        CHECK(std::abs(s.operator_balance) < 1e-9 * std::max(1.0, std::abs(s.nem_cost)));
        for (Eigen::Index n = 0; n < z.size(); ++n) {
            CHECK(std::abs(s.final_payment[n] - s.nem_rate * z[n]) < 1e-9);
            CHECK(std::abs(s.final_payment[n] - (s.ex_ante_charge[n] - s.allocation[n])) <
                  1e-12);
        }
    }
}

TEST_CASE("posted prices decentralize random instances") {
    std::mt19937 rng(71);
    for (int trial = 0; trial < 30; ++trial) {
        auto inst = testsupport::random_instance(rng);
        auto sens = build_sensitivities(inst.net);
        try {
            auto rep = verify_equilibrium(sens, inst.prosumers, inst.tariff);
            CHECK(rep.pass);
            CHECK(rep.max_deviation < 1e-6);
        } catch (const Infeasible&) {
            continue;
        }
    }
}
