#include "maxmi/run_config.hpp"

#include <cstdlib>
#include <sstream>

namespace maxmi {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

double to_double(const std::string& v, const std::string& key) {
    char* end = nullptr;
    double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    return d;
}

long to_long(const std::string& v, const std::string& key) {
    char* end = nullptr;
    long l = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    return l;
}

std::uint64_t to_u64(const std::string& v, const std::string& key) {
    char* end = nullptr;
    unsigned long long l = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config: bad seed for " + key + ": '" + v + "'");
    return l;
}

std::vector<int> to_int_list(const std::string& v, const std::string& key) {
    std::vector<int> out;
    std::istringstream ss(v);
    std::string tok;
    while (std::getline(ss, tok, ','))
        out.push_back(static_cast<int>(to_long(trim(tok), key)));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

}  // namespace

RunConfig RunConfig::parse(const std::string& content) {
    RunConfig cfg;
    std::istringstream in(content);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string s = trim(line);
        if (s.empty() || s[0] == '#' || s[0] == ';') continue;
        if (s.front() == '[' && s.back() == ']') {
            section = trim(s.substr(1, s.size() - 2));
            if (section != "task" && section != "discovery" && section != "policy" &&
                section != "eval")
                throw ConfigError("config line " + std::to_string(lineno) +
                                  ": unknown section [" + section + "]");
            continue;
        }
        auto eq = s.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        std::string key = trim(s.substr(0, eq));
        std::string value = trim(s.substr(eq + 1));
        std::string qual = section.empty() ? key : section + "." + key;
        cfg.apply_override(qual, value);
    }
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    RunConfig cfg = parse(read_file(path));
    cfg.finalize();
    return cfg;
}

void RunConfig::apply_override(const std::string& key, const std::string& value) {
    // global
    if (key == "seed") {
        seed = to_u64(value, key);
        return;
    }
    if (key == "output_dir") {
        output_dir = value;
        return;
    }
    if (key == "normalize_T") {
        normalize_T = static_cast<int>(to_long(value, key));
        return;
    }
    // [task]
    if (key == "task.kind") {
        task.kind = parse_task_kind(value);
        return;
    }
    if (key == "task.n") {
        gen_n = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "task.horizon") {
        task.horizon = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "task.state_noise_sd") {
        task.state_noise_sd = to_double(value, key);
        return;
    }
    if (key == "task.action_noise_sd") {
        task.action_noise_sd = to_double(value, key);
        return;
    }
    if (key == "task.seed") {
        task.seed = to_u64(value, key);
        task_seed_set_ = true;
        return;
    }
    if (key == "task.bounds") {
        std::istringstream ss(value);
        std::string tok;
        std::vector<double> v;
        while (std::getline(ss, tok, ',')) v.push_back(to_double(trim(tok), key));
        if (v.size() != 4) throw ConfigError("config: task.bounds needs xmin,ymin,xmax,ymax");
        task.workspace_bounds = {v[0], v[1], v[2], v[3]};
        return;
    }
    // [discovery]
    if (key == "discovery.K") {
        discovery.K = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.lambda") {
        if (value == "auto")
            discovery.lambda.reset();
        else
            discovery.lambda = to_double(value, key);
        return;
    }
    if (key == "discovery.delta_t") {
        discovery.delta_t = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.nms_window") {
        discovery.nms_window = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.engine") {
        discovery.engine = parse_engine(value);
        return;
    }
    if (key == "discovery.estimator") {
        discovery.estimator.method = parse_estimator_method(value);
        return;
    }
    if (key == "discovery.k_neighbors") {
        discovery.estimator.k_neighbors = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.bins_per_dim") {
        discovery.estimator.bins_per_dim = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.jitter_sd") {
        discovery.estimator.jitter_sd = to_double(value, key);
        return;
    }
    if (key == "discovery.max_sweeps") {
        discovery.max_sweeps = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.seed") {
        discovery.seed = to_u64(value, key);
        discovery_seed_set_ = true;
        return;
    }
    if (key == "discovery.es_population") {
        discovery.localizer.es_population = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.es_iterations") {
        discovery.localizer.es_iterations = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.es_sigma") {
        discovery.localizer.es_sigma = to_double(value, key);
        return;
    }
    if (key == "discovery.es_lr") {
        discovery.localizer.es_lr = to_double(value, key);
        return;
    }
    if (key == "discovery.embed_dim") {
        discovery.localizer.embed_dim = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "discovery.channels") {
        discovery.localizer.channels = static_cast<int>(to_long(value, key));
        return;
    }
    // [policy]
    if (key == "policy.alpha") {
        policy.alpha = to_double(value, key);
        return;
    }
    if (key == "policy.learning_rate") {
        policy.learning_rate = to_double(value, key);
        return;
    }
    if (key == "policy.epochs") {
        policy.epochs = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "policy.batch_size") {
        policy.batch_size = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "policy.hidden") {
        policy.hidden_sizes = to_int_list(value, key);
        return;
    }
    if (key == "policy.seed") {
        policy.seed = to_u64(value, key);
        policy_seed_set_ = true;
        return;
    }
    // [eval]
    if (key == "eval.episodes") {
        eval_episodes = static_cast<int>(to_long(value, key));
        return;
    }
    if (key == "eval.split") {
        if (value != "seen" && value != "unseen")
            throw ConfigError("config: eval.split must be seen or unseen");
        eval_split = value;
        return;
    }
    throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::finalize() {
    if (!task_seed_set_) task.seed = seed;
    if (!discovery_seed_set_) discovery.seed = seed;
    if (!policy_seed_set_) policy.seed = seed;
}

void RunConfig::validate() const {
    if (normalize_T < 2) throw ConfigError("config: normalize_T must be >= 2");
    if (gen_n < 1) throw ConfigError("config: task.n must be >= 1");
    if (eval_episodes < 1) throw ConfigError("config: eval.episodes must be >= 1");
    task.validate();
    discovery.validate();
    policy.validate();
    if (output_dir.empty()) throw ConfigError("config: output_dir must be set");
}

std::string RunConfig::canonical_task() const {
    std::string s;
    s += "task.kind=" + task_kind_name(task.kind) + "\n";
    s += "task.n=" + std::to_string(gen_n) + "\n";
    s += "task.horizon=" + std::to_string(task.horizon) + "\n";
    s += "task.state_noise_sd=" + format_double(task.state_noise_sd) + "\n";
    s += "task.action_noise_sd=" + format_double(task.action_noise_sd) + "\n";
    s += "task.seed=" + std::to_string(task.seed) + "\n";
    s += "task.bounds=" + format_double(task.workspace_bounds.xmin) + "," +
         format_double(task.workspace_bounds.ymin) + "," +
         format_double(task.workspace_bounds.xmax) + "," +
         format_double(task.workspace_bounds.ymax) + "\n";
    return s;
}

std::string RunConfig::canonical_profile() const {
    std::string s = canonical_task();
    s += "normalize_T=" + std::to_string(normalize_T) + "\n";
    s += "discovery.delta_t=" + std::to_string(discovery.delta_t) + "\n";
    s += "estimator.method=" + estimator_method_name(discovery.estimator.method) + "\n";
    s += "estimator.k_neighbors=" + std::to_string(discovery.estimator.k_neighbors) + "\n";
    s += "estimator.bins_per_dim=" + std::to_string(discovery.estimator.bins_per_dim) + "\n";
    s += "estimator.jitter_sd=" + format_double(discovery.estimator.jitter_sd) + "\n";
    return s;
}

std::string RunConfig::canonical_discovery() const {
    std::string s = canonical_profile();
    s += "discovery.K=" + std::to_string(discovery.K) + "\n";
    s += "discovery.lambda=" +
         (discovery.lambda ? format_double(*discovery.lambda) : std::string("auto")) + "\n";
    s += "discovery.nms_window=" + std::to_string(discovery.nms_window) + "\n";
    s += "discovery.engine=" + engine_name(discovery.engine) + "\n";
    s += "discovery.max_sweeps=" + std::to_string(discovery.max_sweeps) + "\n";
    s += "discovery.seed=" + std::to_string(discovery.seed) + "\n";
    if (discovery.engine == DiscoveryConfig::Engine::localizer) {
        const auto& l = discovery.localizer;
        s += "localizer=" + std::to_string(l.embed_dim) + "," + std::to_string(l.channels) + "," +
             std::to_string(l.kernel) + "," + std::to_string(l.conv_layers) + "," +
             std::to_string(l.head_hidden) + "," + std::to_string(l.es_population) + "," +
             std::to_string(l.es_iterations) + "," + format_double(l.es_sigma) + "," +
             format_double(l.es_lr) + "\n";
    }
    return s;
}

std::string RunConfig::canonical_policy() const {
    std::string s = canonical_discovery();
    s += "policy.alpha=" + format_double(policy.alpha) + "\n";
    s += "policy.learning_rate=" + format_double(policy.learning_rate) + "\n";
    s += "policy.epochs=" + std::to_string(policy.epochs) + "\n";
    s += "policy.batch_size=" + std::to_string(policy.batch_size) + "\n";
    s += "policy.hidden=";
    for (std::size_t i = 0; i < policy.hidden_sizes.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(policy.hidden_sizes[i]);
    }
    s += "\n";
    s += "policy.seed=" + std::to_string(policy.seed) + "\n";
    return s;
}

namespace {
std::string short_hash(const std::string& canonical) {
    return hex64(fnv1a64(canonical)).substr(0, 12);
}
}  // namespace

std::string RunConfig::hash_task() const { return short_hash(canonical_task()); }
std::string RunConfig::hash_profile() const { return short_hash(canonical_profile()); }
std::string RunConfig::hash_discovery() const { return short_hash(canonical_discovery()); }
std::string RunConfig::hash_policy() const { return short_hash(canonical_policy()); }

std::string RunConfig::dataset_path() const {
    return output_dir + "/dataset_" + hash_task() + ".txt";
}
std::string RunConfig::profile_csv_path() const {
    return output_dir + "/profile_" + hash_profile() + ".csv";
}
std::string RunConfig::profile_svg_path() const {
    return output_dir + "/profile_" + hash_profile() + ".svg";
}
std::string RunConfig::concepts_path() const {
    return output_dir + "/concepts_" + hash_discovery() + ".json";
}
std::string RunConfig::policy_path() const {
    return output_dir + "/policy_" + hash_policy() + ".txt";
}
std::string RunConfig::policy_loss_path() const {
    return output_dir + "/policy_loss_" + hash_policy() + ".csv";
}
std::string RunConfig::eval_path() const {
    return output_dir + "/eval_" + hash_policy() + "_" + eval_split + ".json";
}
std::string RunConfig::ablate_path() const {
    return output_dir + "/ablate_" + hash_discovery() + ".csv";
}
std::string RunConfig::plot_path() const {
    return output_dir + "/plot_" + hash_profile() + ".svg";
}

}  // namespace maxmi
