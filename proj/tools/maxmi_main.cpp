#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "maxmi/ablate.hpp"
#include "maxmi/common.hpp"
#include "maxmi/discovery.hpp"
#include "maxmi/localizer.hpp"
#include "maxmi/mi_estimation.hpp"
#include "maxmi/plot.hpp"
#include "maxmi/policy.hpp"
#include "maxmi/run_config.hpp"
#include "maxmi/synth_tasks.hpp"
#include "maxmi/trajectory.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitMissing = 3;
constexpr int kExitRuntime = 4;

struct MissingArtifact : maxmi::Error {
    using Error::Error;
};

bool file_exists(const std::string& path) { return std::filesystem::exists(path); }

void require_file(const std::string& path, const std::string& producer) {
    if (!file_exists(path))
        throw MissingArtifact("missing artifact " + path + " (run `maxmi " + producer +
                              "` first)");
}

maxmi::PlotMarks marks_from(const maxmi::Dataset* ds, const maxmi::ConceptSet* concepts, int T) {
    maxmi::PlotMarks marks;
    if (ds) {
        // mean normalized mark position per label
        std::vector<std::pair<std::string, std::pair<double, int>>> acc;
        for (const auto& traj : ds->trajectories) {
            for (const auto& [label, pos] : maxmi::normalized_marks(traj, T)) {
                bool found = false;
                for (auto& [l, s] : acc)
                    if (l == label) {
                        s.first += pos;
                        s.second += 1;
                        found = true;
                    }
                if (!found) acc.push_back({label, {pos, 1}});
            }
        }
        for (const auto& [label, s] : acc)
            marks.event_marks.emplace_back(label, s.first / s.second);
    }
    if (concepts) marks.concept_indices = concepts->mean_indices();
    return marks;
}

int run_gen(const maxmi::RunConfig& cfg) {
    maxmi::Dataset ds = maxmi::generate(cfg.task, cfg.gen_n);
    maxmi::save_dataset(ds, cfg.dataset_path(),
                        {{"config_hash", cfg.hash_task()},
                         {"kind", maxmi::task_kind_name(cfg.task.kind)},
                         {"n", std::to_string(cfg.gen_n)}});
    std::cout << "wrote " << cfg.dataset_path() << " (" << ds.size() << " trajectories)\n";
    return kExitOk;
}

int run_profile(const maxmi::RunConfig& cfg) {
    require_file(cfg.dataset_path(), "gen");
    maxmi::Dataset ds = maxmi::load_dataset(cfg.dataset_path());
    maxmi::NormalizedDataset nd = maxmi::normalize(ds, cfg.normalize_T);
    maxmi::MIProfile profile =
        maxmi::mi_profile(nd, cfg.discovery.delta_t, cfg.discovery.estimator);
    maxmi::atomic_write(cfg.profile_csv_path(), profile.to_csv(cfg.hash_profile()));
    std::string svg = maxmi::plot_profile_svg(profile, marks_from(&ds, nullptr, cfg.normalize_T),
                                              "mi profile  config_hash=" + cfg.hash_profile());
    maxmi::atomic_write(cfg.profile_svg_path(), svg);
    std::cout << "wrote " << cfg.profile_csv_path() << "\nwrote " << cfg.profile_svg_path()
              << "\n";
    return kExitOk;
}

int run_discover(const maxmi::RunConfig& cfg) {
    require_file(cfg.dataset_path(), "gen");
    maxmi::DatasetFile df = maxmi::load_dataset_file(cfg.dataset_path());
    maxmi::NormalizedDataset nd = maxmi::normalize(df.dataset, cfg.normalize_T);
    maxmi::ConceptSet cs = maxmi::discover(nd, cfg.discovery);
    cs.config_hash = cfg.hash_discovery();
    auto it = df.metadata.find("config_hash");
    cs.dataset_hash = it != df.metadata.end() ? it->second : cfg.hash_task();
    maxmi::atomic_write(cfg.concepts_path(), cs.to_json());
    std::cout << "wrote " << cfg.concepts_path() << " (" << cs.num_concepts()
              << " concepts, status=" << cs.status << ")\n";
    return kExitOk;
}

int run_train_policy(const maxmi::RunConfig& cfg) {
    require_file(cfg.dataset_path(), "gen");
    require_file(cfg.concepts_path(), "discover");
    maxmi::DatasetFile df = maxmi::load_dataset_file(cfg.dataset_path());
    maxmi::ConceptSet cs = maxmi::ConceptSet::from_json(maxmi::read_file(cfg.concepts_path()));
    auto it = df.metadata.find("config_hash");
    if (it != df.metadata.end() && !cs.dataset_hash.empty() && cs.dataset_hash != it->second)
        throw MissingArtifact("concept set " + cfg.concepts_path() +
                              " references a different dataset (hash " + cs.dataset_hash + ")");

    maxmi::TrainResult tr = maxmi::train_bc(df.dataset, cs, cfg.policy);
    maxmi::atomic_write(cfg.policy_path(), tr.model.serialize(cfg.hash_policy()));
    std::string loss_csv = "# config_hash=" + cfg.hash_policy() + "\nepoch,loss\n";
    for (std::size_t e = 0; e < tr.loss_trace.size(); ++e)
        loss_csv += std::to_string(e) + "," + maxmi::format_double(tr.loss_trace[e]) + "\n";
    maxmi::atomic_write(cfg.policy_loss_path(), loss_csv);
    std::cout << "wrote " << cfg.policy_path() << "\nwrote " << cfg.policy_loss_path()
              << " (final loss " << tr.loss_trace.back() << ")\n";
    return kExitOk;
}

int run_eval(const maxmi::RunConfig& cfg) {
    require_file(cfg.policy_path(), "train-policy");
    maxmi::PolicyModel model =
        maxmi::PolicyModel::deserialize(maxmi::read_file(cfg.policy_path()));
    const maxmi::Dataset* train = nullptr;
    maxmi::Dataset ds;
    if (cfg.eval_split == "seen") {
        require_file(cfg.dataset_path(), "gen");
        ds = maxmi::load_dataset(cfg.dataset_path());
        train = &ds;
    }
    maxmi::EvalReport report =
        maxmi::evaluate(model, cfg.task, cfg.eval_episodes, cfg.eval_split, train);
    maxmi::atomic_write(cfg.eval_path(), report.to_json(cfg.hash_policy()));
    std::cout << "wrote " << cfg.eval_path() << " (task success " << report.task_success
              << ")\n";
    return kExitOk;
}

int run_ablate_cmd(const maxmi::RunConfig& cfg) {
    require_file(cfg.dataset_path(), "gen");
    maxmi::Dataset ds = maxmi::load_dataset(cfg.dataset_path());
    maxmi::NormalizedDataset nd = maxmi::normalize(ds, cfg.normalize_T);
    maxmi::AblationReport report = maxmi::run_ablation(nd, ds, cfg.discovery);
    maxmi::atomic_write(cfg.ablate_path(), report.to_csv(cfg.hash_discovery()));
    for (auto& arm : report.arms) {
        arm.concepts.config_hash = cfg.hash_discovery();
        maxmi::atomic_write(cfg.output_dir + "/concepts_" + cfg.hash_discovery() + "_" +
                                arm.name + ".json",
                            arm.concepts.to_json());
    }
    std::cout << "wrote " << cfg.ablate_path() << "\n";
    for (const auto& arm : report.arms)
        std::cout << "  " << arm.name << ": spread=" << arm.spread << " mae=" << arm.mae
                  << " concepts=" << arm.concepts.num_concepts() << "\n";
    return kExitOk;
}

int run_plot(const maxmi::RunConfig& cfg) {
    require_file(cfg.profile_csv_path(), "profile");
    maxmi::MIProfile profile =
        maxmi::profile_from_csv(maxmi::read_file(cfg.profile_csv_path()));

    std::optional<maxmi::Dataset> ds;
    if (file_exists(cfg.dataset_path())) ds = maxmi::load_dataset(cfg.dataset_path());
    std::optional<maxmi::ConceptSet> cs;
    if (file_exists(cfg.concepts_path()))
        cs = maxmi::ConceptSet::from_json(maxmi::read_file(cfg.concepts_path()));

    std::string svg = maxmi::plot_profile_svg(
        profile, marks_from(ds ? &*ds : nullptr, cs ? &*cs : nullptr, cfg.normalize_T),
        "mi profile + concepts  config_hash=" + cfg.hash_profile());
    maxmi::atomic_write(cfg.plot_path(), svg);
    std::cout << "wrote " << cfg.plot_path() << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"maxmi: key-state discovery in demonstration trajectories by maximal "
                 "predecessor mutual information"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "experiment config file")->required();
    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "override the global seed");
    std::optional<std::string> out_dir;
    app.add_option("--out", out_dir, "override output_dir");
    std::optional<std::string> engine;
    app.add_option("--engine", engine, "override discovery.engine");
    std::optional<double> lambda;
    app.add_option("--lambda", lambda, "override discovery.lambda");
    std::optional<int> delta_t;
    app.add_option("--delta-t", delta_t, "override discovery.delta_t");
    std::optional<double> alpha;
    app.add_option("--alpha", alpha, "override policy.alpha");

    auto* cmd_gen = app.add_subcommand("gen", "generate a demonstration dataset");
    auto* cmd_profile = app.add_subcommand("profile", "compute the MI profile");
    auto* cmd_discover = app.add_subcommand("discover", "discover key-state concepts");
    auto* cmd_train = app.add_subcommand("train-policy", "train the concept-guided policy");
    auto* cmd_eval = app.add_subcommand("eval", "evaluate a trained policy");
    auto* cmd_ablate = app.add_subcommand("ablate", "compare loss-term ablations");
    auto* cmd_plot = app.add_subcommand("plot", "plot profile with concept/event overlays");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        maxmi::RunConfig cfg = maxmi::RunConfig::from_file(config_path);
        if (seed) {
            cfg.seed = *seed;
            cfg.finalize();  // reseed unseeded blocks from the override
            cfg.task.seed = *seed;
            cfg.discovery.seed = *seed;
            cfg.policy.seed = *seed;
        }
        if (out_dir) cfg.output_dir = *out_dir;
        if (engine) cfg.apply_override("discovery.engine", *engine);
        if (lambda) cfg.apply_override("discovery.lambda", maxmi::format_double(*lambda));
        if (delta_t) cfg.apply_override("discovery.delta_t", std::to_string(*delta_t));
        if (alpha) cfg.apply_override("policy.alpha", maxmi::format_double(*alpha));
        const bool ablation = cmd_ablate->parsed();
        if (!ablation) cfg.validate();

        if (cmd_gen->parsed()) return run_gen(cfg);
        if (cmd_profile->parsed()) return run_profile(cfg);
        if (cmd_discover->parsed()) return run_discover(cfg);
        if (cmd_train->parsed()) return run_train_policy(cfg);
        if (cmd_eval->parsed()) return run_eval(cfg);
        if (ablation) return run_ablate_cmd(cfg);
        if (cmd_plot->parsed()) return run_plot(cfg);
        std::cerr << "no subcommand\n";
        return kExitConfig;
    } catch (const maxmi::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissing;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
