#pragma once

// Scenario execution. Produces every output file in memory so callers (CLI,
// tests) decide where bytes land; timings go to their own file since they
// are the one non-deterministic output.

#include <chrono>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mbfv/bfv.hpp"
#include "mbfv/config.hpp"
#include "mbfv/dpsgd.hpp"
#include "mbfv/model.hpp"
#include "mbfv/netsim.hpp"

namespace mbfv {

struct RunOutput {
    // filename -> content; "timings.csv" is excluded from determinism claims
    std::map<std::string, std::string> files;
    // named scalar results, for programmatic checks
    std::map<std::string, double> metrics;
};

namespace detail {

inline std::string csv_num(double v) { return format_double(v); }

struct PhaseTimes {
    double init = 0.0, enc = 0.0, eval = 0.0, dec = 0.0, total = 0.0;
};

inline void append_timings(std::ostringstream& os, const std::string& scope,
                           const PhaseTimes& t) {
    os << scope << ",initialization," << csv_num(t.init) << "\n";
    os << scope << ",encryption," << csv_num(t.enc) << "\n";
    os << scope << ",ciphertext evaluation," << csv_num(t.eval) << "\n";
    os << scope << ",decryption," << csv_num(t.dec) << "\n";
    os << scope << ",total," << csv_num(t.total) << "\n";
}

struct TrainingTask {
    Model model;
    std::vector<Dataset> shards;
    Dataset test;
    Topology topo;
};

/// Shared synthetic task: two-class separable blobs, round-robin sharded.
inline TrainingTask make_task(const ExperimentSpec& spec) {
    Dataset all = make_blobs(600, spec.seed);
    Dataset train(all.begin(), all.begin() + 400);
    Dataset test(all.begin() + 400, all.end());
    Prng topo_rng(spec.seed ^ 0x7465727261696eull);
    TrainingTask task{Model::logistic(2), shard_dataset(train, spec.users), std::move(test),
                      gen_topology(spec.users, spec.connection_rate, topo_rng)};
    return task;
}

}  // namespace detail

inline RunOutput run_train_compare(const ExperimentSpec& spec) {
    auto task = detail::make_task(spec);
    TrainConfig cfg = spec.train_config();
    TrainReport plain = run_plaintext_training(task.model, task.shards, task.topo, cfg, &task.test);
    TrainReport priv = run_private_training(task.model, task.shards, task.topo, cfg, &task.test);

    RunOutput out;
    std::ostringstream acc;
    acc << "iteration,plaintext_loss,private_loss,plaintext_accuracy,private_accuracy\n";
    for (std::size_t k = 0; k < spec.iterations; ++k)
        acc << k << "," << detail::csv_num(plain.loss_per_iter[k]) << ","
            << detail::csv_num(priv.loss_per_iter[k]) << ","
            << detail::csv_num(plain.test_acc_per_iter[k]) << ","
            << detail::csv_num(priv.test_acc_per_iter[k]) << "\n";
    out.files["accuracy.csv"] = acc.str();
    out.files["meters.csv"] = priv.meter_csv;

    std::ostringstream tim;
    tim << "scope,phase,seconds\n";
    detail::append_timings(tim, "run",
                           {priv.time_init, priv.time_encrypt, priv.time_eval, priv.time_decrypt,
                            priv.time_total});
    out.files["timings.csv"] = tim.str();

    double max_div = 0.0;
    for (std::size_t i = 0; i < spec.users; ++i)
        for (std::size_t p = 0; p < plain.final_w[i].size(); ++p)
            max_div = std::max(max_div, std::abs(plain.final_w[i][p] - priv.final_w[i][p]));
    const double acc_plain = plain.test_acc_per_iter.back();
    const double acc_priv = priv.test_acc_per_iter.back();
    out.metrics["plaintext_accuracy"] = acc_plain;
    out.metrics["private_accuracy"] = acc_priv;
    out.metrics["max_param_divergence"] = max_div;

    std::ostringstream sum;
    sum << "scenario train-compare\n\n# config\n" << spec_echo(spec) << "\n# results\n";
    sum << "plaintext_accuracy = " << detail::csv_num(acc_plain) << "\n";
    sum << "private_accuracy = " << detail::csv_num(acc_priv) << "\n";
    sum << "max_param_divergence = " << detail::csv_num(max_div) << "\n";
    out.files["summary.txt"] = sum.str();
    return out;
}

inline RunOutput run_comm_table(const ExperimentSpec& spec) {
    auto task = detail::make_task(spec);
    TrainConfig cfg = spec.train_config();
    PrivateTrainer trainer(task.model, task.shards, task.topo, cfg);
    TrainReport report = trainer.run();

    RunOutput out;
    std::ostringstream comm;
    comm << "user,degree,units,bytes\n";
    const auto& last_units = report.units_per_iter.back();
    for (std::size_t i = 0; i < spec.users; ++i) {
        PhaseCounters total = trainer.network().meter().sent_total(i);
        comm << i << "," << task.topo.degree(i) << "," << last_units[i] << "," << total.bytes
             << "\n";
        out.metrics["units_user_" + std::to_string(i)] = static_cast<double>(last_units[i]);
        out.metrics["degree_user_" + std::to_string(i)] = static_cast<double>(task.topo.degree(i));
    }
    out.files["comm.csv"] = comm.str();
    out.files["meters.csv"] = report.meter_csv;

    std::ostringstream tim;
    tim << "scope,phase,seconds\n";
    detail::append_timings(tim, "run",
                           {report.time_init, report.time_encrypt, report.time_eval,
                            report.time_decrypt, report.time_total});
    out.files["timings.csv"] = tim.str();

    std::ostringstream sum;
    sum << "scenario comm-table\n\n# config\n" << spec_echo(spec)
        << "\n# results\nrows = " << spec.users << "\n";
    out.files["summary.txt"] = sum.str();
    return out;
}

inline RunOutput run_unit_bench(const ExperimentSpec& spec) {
    using Clock = std::chrono::steady_clock;
    auto secs = [](Clock::time_point t0) {
        return std::chrono::duration<double>(Clock::now() - t0).count();
    };

    RunOutput out;
    std::ostringstream tim;
    tim << "scope,phase,seconds\n";
    for (const std::string& name : {std::string("n2048"), std::string("n4096")}) {
        RingParams params = preset(name);
        NoiseParams noise;
        Prng rng(spec.seed ^ (name == "n2048" ? 0x11u : 0x22u));
        detail::PhaseTimes t;
        auto t_run = Clock::now();
        for (std::size_t r = 0; r < spec.repeats; ++r) {
            auto t0 = Clock::now();
            SecretKey sk = seckeygen(params, rng);
            PublicKey pk = pubkeygen(sk, params, noise, rng);
            t.init += secs(t0);

            Plaintext pt = Plaintext::zero(params);
            for (std::size_t i = 0; i < params.n(); ++i) pt.m[i] = rng.uniform_below(params.t());
            t0 = Clock::now();
            Ciphertext ct = encrypt(pk, pt, params, noise, rng);
            t.enc += secs(t0);

            t0 = Clock::now();
            Ciphertext sum = hom_add(ct, plain_scalar_mul(ct, 3));
            t.eval += secs(t0);

            t0 = Clock::now();
            Plaintext back = decrypt(sk, sum);
            t.dec += secs(t0);
            if (back.m[0] != (4 * pt.m[0]) % params.t())
                throw std::runtime_error("bench self-check failed at " + name);
        }
        t.total = secs(t_run);
        detail::append_timings(tim, name, t);
        out.metrics[name + ".initialization"] = t.init;
        out.metrics[name + ".encryption"] = t.enc;
        out.metrics[name + ".ciphertext evaluation"] = t.eval;
        out.metrics[name + ".decryption"] = t.dec;
    }
    out.files["timings.csv"] = tim.str();

    std::ostringstream sum;
    sum << "scenario unit-bench\n\n# config\n" << spec_echo(spec)
        << "\n# results\nsee timings.csv (wall-clock, not asserted)\n";
    out.files["summary.txt"] = sum.str();
    return out;
}

inline RunOutput run_experiment(const ExperimentSpec& spec) {
    if (spec.scenario == "train-compare") return run_train_compare(spec);
    if (spec.scenario == "comm-table") return run_comm_table(spec);
    if (spec.scenario == "unit-bench") return run_unit_bench(spec);
    throw std::invalid_argument("unknown scenario: " + spec.scenario);
}

}  // namespace mbfv
