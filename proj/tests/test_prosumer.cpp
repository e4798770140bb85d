#include <doctest.h>

#include <cmath>
#include <random>

#include <gridshare/errors.hpp>
#include <gridshare/prosumer.hpp>

#include "support/instance_gen.hpp"

using namespace gridshare;

namespace {

Prosumer single_device(double alpha = 10.0, double beta = 2.0, double d_lo = 0.0,
                       double d_hi = 10.0, double g = 1.0) {
    Prosumer p;
    p.id = 1;
    p.bus = 1;
    p.devices = {{alpha, beta, d_lo, d_hi}};
    p.g = g;
    return p;
}

Eigen::VectorXd vec1(double v) {
    Eigen::VectorXd d(1);
    d << v;
    return d;
}

}  // namespace

TEST_CASE("quadratic utility with saturation cap") {
    Prosumer p = single_device();
    CHECK(utility(p, vec1(3.0)) == doctest::Approx(21.0).epsilon(1e-15));
    CHECK(utility(p, vec1(0.0)) == 0.0);
    // marginal value hits zero at alpha/beta = 5; beyond that utility is flat
    CHECK(utility(p, vec1(5.0)) == doctest::Approx(25.0).epsilon(1e-15));
    CHECK(utility(p, vec1(7.0)) == doctest::Approx(25.0).epsilon(1e-15));
    CHECK_THROWS_AS(utility(p, vec1(-0.5)), DomainError);
    CHECK_THROWS_AS(utility(p, Eigen::VectorXd::Zero(2)), DimensionError);
}

TEST_CASE("marginal utility inversion") {
    DeviceUtility dev{10.0, 2.0, 0.0, 10.0};
    CHECK(inverse_marginal(dev, 4.0) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(inverse_marginal(dev, 10.0) == 0.0);
    CHECK(inverse_marginal(dev, 0.0) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("best response clips the inverted marginal into the box") {
    Prosumer p = single_device();
    auto br = best_response(p, 4.0);
    CHECK(br.d[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(br.z == doctest::Approx(2.0).epsilon(1e-15));

    CHECK(best_response(p, 12.0).d[0] == 0.0);   // price above alpha: floor
    CHECK(best_response(p, -5.0).d[0] == 10.0);  // deep subsidy: ceiling

    // exact boundary prices land exactly on the box edges
    Prosumer q = single_device(10.0, 2.0, 1.0, 4.0);
    CHECK(best_response(q, 10.0 - 2.0 * 4.0).d[0] == 4.0);
    CHECK(best_response(q, 10.0 - 2.0 * 1.0).d[0] == 1.0);
}

TEST_CASE("multi-device split equalizes marginal utilities") {
    std::vector<DeviceUtility> devs = {{10.0, 2.0, 0.0, 10.0}, {8.0, 1.0, 0.0, 10.0}};
    Eigen::VectorXd d = split_at_equal_marginal(devs, 6.0);
    CHECK(d.sum() == doctest::Approx(6.0).epsilon(1e-12));
    CHECK(d[0] == doctest::Approx(8.0 / 3.0).epsilon(1e-9));
    CHECK(d[1] == doctest::Approx(10.0 / 3.0).epsilon(1e-9));
    CHECK(10.0 - 2.0 * d[0] == doctest::Approx(8.0 - d[1]).epsilon(1e-9));
    CHECK_THROWS_AS(split_at_equal_marginal(devs, 25.0), DomainError);
    CHECK_THROWS_AS(split_at_equal_marginal(devs, -1.0), DomainError);
}

TEST_CASE("split lands exactly on the requested total") {
    std::mt19937 rng(23);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        int n_dev = 1 + static_cast<int>(u01(rng) * 3.0);
        std::vector<DeviceUtility> devs;
        double lo = 0.0, hi = 0.0;
        for (int k = 0; k < n_dev; ++k) {
            DeviceUtility dev;
            dev.alpha = 4.0 + 8.0 * u01(rng);
            dev.beta = 0.5 + 2.5 * u01(rng);
            dev.d_lo = 0.3 * u01(rng);
            dev.d_hi = dev.d_lo + 3.0 * u01(rng);
            lo += dev.d_lo;
            hi += dev.d_hi;
            devs.push_back(dev);
        }
        double target = lo + (hi - lo) * u01(rng);
        Eigen::VectorXd d = split_at_equal_marginal(devs, target);
        CHECK(d.sum() == doctest::Approx(target).epsilon(1e-12));
        for (int k = 0; k < n_dev; ++k) {
            CHECK(d[k] >= devs[k].d_lo - 1e-12);
            CHECK(d[k] <= devs[k].d_hi + 1e-12);
        }
    }
}

TEST_CASE("envelope narrows the best response") {
    SUBCASE("wide envelope changes nothing") {
        Prosumer p = single_device();
        p.envelope = Envelope{-100.0, 100.0};
        auto br = best_response_enveloped(p, 4.0);
        CHECK(br.d[0] == doctest::Approx(3.0).epsilon(1e-15));
        CHECK(br.z == doctest::Approx(2.0).epsilon(1e-15));
    }
    SUBCASE("export cap binds") {
        Prosumer p = single_device();
        p.envelope = Envelope{-100.0, 1.0};
        auto br = best_response_enveloped(p, 4.0);  // unconstrained z would be 2
        CHECK(br.z == 1.0);
        CHECK(br.d[0] == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("import floor binds") {
        Prosumer p = single_device(10.0, 2.0, 0.0, 10.0, 5.0);
        p.envelope = Envelope{-2.0, 100.0};
        auto br = best_response_enveloped(p, 10.0);  // unconstrained d = 0, z = -5
        CHECK(br.z == -2.0);
        CHECK(br.d[0] == doctest::Approx(3.0).epsilon(1e-12));
    }
    SUBCASE("envelope out of the box's reach") {
        Prosumer p = single_device(10.0, 2.0, 0.0, 2.0, 10.0);
        p.envelope = Envelope{-3.0, 100.0};  // z = d - 10 can reach -8 at best
        CHECK_THROWS_AS(best_response_enveloped(p, 4.0), EnvelopeInfeasible);
    }
}

TEST_CASE("surplus of the worked example") {
    Prosumer p = single_device();
    // z = d - g, payment = price * z
    CHECK(surplus(p, vec1(3.0), 4.0 * 2.0) == doctest::Approx(13.0).epsilon(1e-15));
    CHECK(surplus(p, vec1(0.0), 4.0 * -1.0) == doctest::Approx(4.0).epsilon(1e-15));
}

TEST_CASE("best response maximizes surplus over random feasible schedules") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    testsupport::GenOptions opt;
    opt.max_prosumers = 1;
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = testsupport::random_instance(rng, opt);
        const Prosumer& p = inst.prosumers[0];
        double price = 14.0 * u01(rng);
        auto br = best_response(p, price);
        double best = surplus(p, br.d, price * br.z);
        for (int s = 0; s < 20; ++s) {
            Eigen::VectorXd d = testsupport::random_box_schedule(rng, p);
            double pay = price * (d.sum() - p.g);
            CHECK(surplus(p, d, pay) <= best + 1e-9 * (1.0 + std::abs(best)));
        }
    }
}

TEST_CASE("enveloped best response maximizes surplus within the envelope") {
    std::mt19937 rng(37);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    testsupport::GenOptions opt;
    opt.max_prosumers = 1;
    opt.envelopes = true;
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = testsupport::random_instance(rng, opt);
        const Prosumer& p = inst.prosumers[0];
        double price = 14.0 * u01(rng);
        auto br = best_response_enveloped(p, price);
        const Envelope& env = *p.envelope;
        CHECK(br.z >= env.z_lo - 1e-12);
        CHECK(br.z <= env.z_hi + 1e-12);
        CHECK(br.z == doctest::Approx(br.d.sum() - p.g).epsilon(1e-12));
        double best = surplus(p, br.d, price * br.z);
        int kept = 0;
        for (int s = 0; s < 200 && kept < 20; ++s) {
            Eigen::VectorXd d = testsupport::random_box_schedule(rng, p);
            double z = d.sum() - p.g;
            if (z < env.z_lo || z > env.z_hi) continue;
            ++kept;
            CHECK(surplus(p, d, price * z) <= best + 1e-9 * (1.0 + std::abs(best)));
        }
    }
}

TEST_CASE("aggregate consumption is non-increasing in price") {
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = testsupport::random_instance(rng);
        double p1 = 14.0 * u01(rng);
        double p2 = 14.0 * u01(rng);
        if (p1 > p2) std::swap(p1, p2);
        for (const auto& p : inst.prosumers) {
            CHECK(consumption_total_at_price(p, p1) >=
                  consumption_total_at_price(p, p2) - 1e-12);
        }
    }
}

TEST_CASE("interior best response equalizes marginal utility with the price") {
    std::mt19937 rng(43);
    for (int trial = 0; trial < 50; ++trial) {
        auto inst = testsupport::random_instance(rng);
        for (const auto& p : inst.prosumers) {
            double price = 0.5 * (inst.tariff.pi_plus + inst.tariff.pi_minus);
            auto br = best_response(p, price);
            for (size_t k = 0; k < p.devices.size(); ++k) {
                const auto& dev = p.devices[k];
                if (br.d[k] > dev.d_lo + 1e-9 && br.d[k] < dev.d_hi - 1e-9) {
                    CHECK(dev.alpha - dev.beta * br.d[k] == doctest::Approx(price).epsilon(1e-9));
                }
            }
        }
    }
}
