#include "maxmi/trajectory.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <sstream>

namespace maxmi {

void Trajectory::validate() const {
    if (states.rows() < 2) throw Error("trajectory " + id + ": needs at least 2 steps");
    if (states.cols() < 1) throw Error("trajectory " + id + ": empty state dimension");
    if (!states.allFinite()) throw Error("trajectory " + id + ": non-finite state value");
    if (actions) {
        if (actions->rows() != states.rows())
            throw Error("trajectory " + id + ": action rows do not match state rows");
        if (!actions->allFinite()) throw Error("trajectory " + id + ": non-finite action value");
    }
    int prev = -1;
    for (const auto& m : event_marks) {
        if (m.index < 0 || m.index >= length())
            throw Error("trajectory " + id + ": mark '" + m.label + "' index out of range");
        if (m.index <= prev)
            throw Error("trajectory " + id + ": mark indices must be strictly increasing");
        prev = m.index;
    }
}

std::optional<int> Trajectory::mark_index(const std::string& label) const {
    for (const auto& m : event_marks)
        if (m.label == label) return m.index;
    return std::nullopt;
}

void Dataset::validate() const {
    if (trajectories.empty()) throw Error("dataset: needs at least one trajectory");
    int q = trajectories.front().state_dim();
    int a = trajectories.front().action_dim();
    for (const auto& t : trajectories) {
        t.validate();
        if (t.state_dim() != q)
            throw Error("dataset: trajectory " + t.id + " has Q=" + std::to_string(t.state_dim()) +
                        ", expected " + std::to_string(q));
        if (t.action_dim() != a)
            throw Error("dataset: trajectory " + t.id + " has A=" + std::to_string(t.action_dim()) +
                        ", expected " + std::to_string(a));
    }
}

double NormalizedDataset::to_raw(int i, double normalized_index) const {
    return map_index(normalized_index, raw_lengths.at(static_cast<std::size_t>(i)), T);
}

double map_index(double normalized_index, int raw_length, int T) {
    if (T < 2 || raw_length < 2) throw Error("map_index: lengths must be >= 2");
    if (normalized_index < 0.0 || normalized_index > static_cast<double>(T - 1))
        throw Error("map_index: normalized index out of range");
    return normalized_index * static_cast<double>(raw_length - 1) / static_cast<double>(T - 1);
}

NormalizedDataset normalize(const Dataset& dataset, int T) {
    if (T < 2) throw Error("normalize: T must be >= 2");
    dataset.validate();

    NormalizedDataset nd;
    nd.T = T;
    nd.states.resize(dataset.trajectories.size());
    nd.ids.resize(dataset.trajectories.size());
    nd.raw_lengths.resize(dataset.trajectories.size());

    for (std::size_t i = 0; i < dataset.trajectories.size(); ++i) {
        const Trajectory& traj = dataset.trajectories[i];
        const Mat& src = traj.states;
        const int ti = traj.length();
        const int q = traj.state_dim();
        Mat out(T, q);
        for (int j = 0; j < T; ++j) {
            double u = static_cast<double>(j) * static_cast<double>(ti - 1) /
                       static_cast<double>(T - 1);
            int lo = static_cast<int>(std::floor(u));
            if (lo >= ti - 1) {
                out.row(j) = src.row(ti - 1);
                continue;
            }
            double f = u - static_cast<double>(lo);
            if (f == 0.0)
                out.row(j) = src.row(lo);
            else
                out.row(j) = (1.0 - f) * src.row(lo) + f * src.row(lo + 1);
        }
        nd.states[i] = std::move(out);
        nd.ids[i] = traj.id;
        nd.raw_lengths[i] = ti;
    }
    return nd;
}

std::vector<std::pair<std::string, double>> normalized_marks(const Trajectory& traj, int T) {
    std::vector<std::pair<std::string, double>> out;
    const double scale = static_cast<double>(T - 1) / static_cast<double>(traj.length() - 1);
    for (const auto& m : traj.event_marks)
        out.emplace_back(m.label, static_cast<double>(m.index) * scale);
    return out;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

long parse_kv_int(const std::string& tok, const std::string& key, const std::string& ctx) {
    if (tok.rfind(key + "=", 0) != 0)
        throw ParseError(ctx + ": expected " + key + "=<int>, got '" + tok + "'");
    const char* begin = tok.c_str() + key.size() + 1;
    char* end = nullptr;
    long v = std::strtol(begin, &end, 10);
    if (end == begin || *end != '\0')
        throw ParseError(ctx + ": bad integer in '" + tok + "'");
    return v;
}

double parse_float(const std::string& tok, const std::string& ctx) {
    char* end = nullptr;
    double v = std::strtod(tok.c_str(), &end);
    if (end == tok.c_str() || *end != '\0')
        throw ParseError(ctx + ": bad float '" + tok + "'");
    if (!std::isfinite(v)) throw ParseError(ctx + ": non-finite value '" + tok + "'");
    return v;
}

}  // namespace

std::string serialize_dataset(const Dataset& dataset,
                              const std::map<std::string, std::string>& metadata) {
    dataset.validate();
    std::string out;
    out += "MAXMI-DS v1 N=" + std::to_string(dataset.size()) +
           " Q=" + std::to_string(dataset.state_dim()) +
           " A=" + std::to_string(dataset.action_dim()) + "\n";
    for (const auto& [k, v] : metadata) out += "# " + k + "=" + v + "\n";
    for (const auto& traj : dataset.trajectories) {
        if (traj.id.find_first_of(" \t\n") != std::string::npos)
            throw Error("trajectory id contains whitespace: '" + traj.id + "'");
        out += "TRAJ " + traj.id + " T=" + std::to_string(traj.length()) +
               " MARKS=" + std::to_string(traj.event_marks.size()) + "\n";
        for (const auto& m : traj.event_marks)
            out += "MARK " + m.label + " " + std::to_string(m.index) + "\n";
        const int q = traj.state_dim();
        const int a = traj.action_dim();
        for (int t = 0; t < traj.length(); ++t) {
            for (int d = 0; d < q; ++d) {
                if (d) out += ' ';
                out += format_double(traj.states(t, d));
            }
            for (int d = 0; d < a; ++d) {
                out += ' ';
                out += format_double((*traj.actions)(t, d));
            }
            out += '\n';
        }
    }
    return out;
}

void save_dataset(const Dataset& dataset, const std::string& path,
                  const std::map<std::string, std::string>& metadata) {
    atomic_write(path, serialize_dataset(dataset, metadata));
}

DatasetFile load_dataset_file(const std::string& path) {
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");

    auto head = split_ws(line);
    if (head.size() != 5 || head[0] != "MAXMI-DS" || head[1] != "v1")
        throw ParseError(path + ": bad header '" + line + "'");
    long n = parse_kv_int(head[2], "N", path + ": header");
    long q = parse_kv_int(head[3], "Q", path + ": header");
    long a = parse_kv_int(head[4], "A", path + ": header");
    if (n < 1 || q < 1 || a < 0) throw ParseError(path + ": invalid header dimensions");

    DatasetFile result;
    std::streampos body_start = in.tellg();
    while (std::getline(in, line)) {
        if (line.rfind("# ", 0) != 0) break;
        std::string kv = line.substr(2);
        auto eq = kv.find('=');
        if (eq != std::string::npos) result.metadata[kv.substr(0, eq)] = kv.substr(eq + 1);
        body_start = in.tellg();
    }
    in.clear();
    in.seekg(body_start);

    result.dataset.trajectories.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) {
        if (!std::getline(in, line))
            throw ParseError(path + ": unexpected end of file before trajectory " +
                             std::to_string(i));
        auto toks = split_ws(line);
        if (toks.size() != 4 || toks[0] != "TRAJ")
            throw ParseError(path + ": expected TRAJ line, got '" + line + "'");
        Trajectory traj;
        traj.id = toks[1];
        const std::string ctx = path + ": trajectory " + traj.id;
        long t_len = parse_kv_int(toks[2], "T", ctx);
        long marks = parse_kv_int(toks[3], "MARKS", ctx);
        if (t_len < 2) throw ParseError(ctx + ": T must be >= 2");

        for (long m = 0; m < marks; ++m) {
            if (!std::getline(in, line)) throw ParseError(ctx + ": missing MARK line");
            auto mt = split_ws(line);
            if (mt.size() != 3 || mt[0] != "MARK")
                throw ParseError(ctx + ": expected MARK line, got '" + line + "'");
            traj.event_marks.push_back(
                {mt[1], static_cast<int>(parse_kv_int("I=" + mt[2], "I", ctx))});
        }

        traj.states.resize(t_len, q);
        if (a > 0) traj.actions = Mat(t_len, a);
        for (long t = 0; t < t_len; ++t) {
            if (!std::getline(in, line))
                throw ParseError(ctx + ": missing data row " + std::to_string(t));
            auto vals = split_ws(line);
            if (static_cast<long>(vals.size()) != q + a)
                throw ParseError(ctx + ": row " + std::to_string(t) + " has " +
                                 std::to_string(vals.size()) + " values, expected " +
                                 std::to_string(q + a));
            const std::string rowctx = ctx + " row " + std::to_string(t);
            for (long d = 0; d < q; ++d)
                traj.states(t, d) = parse_float(vals[static_cast<std::size_t>(d)], rowctx);
            for (long d = 0; d < a; ++d)
                (*traj.actions)(t, d) = parse_float(vals[static_cast<std::size_t>(q + d)], rowctx);
        }
        result.dataset.trajectories.push_back(std::move(traj));
    }
    result.dataset.validate();
    return result;
}

Dataset load_dataset(const std::string& path) { return load_dataset_file(path).dataset; }

std::string dataset_to_csv(const Dataset& dataset) {
    std::string out = "trajectory_id,time,dim,value\n";
    for (const auto& traj : dataset.trajectories)
        for (int t = 0; t < traj.length(); ++t)
            for (int d = 0; d < traj.state_dim(); ++d)
                out += traj.id + "," + std::to_string(t) + "," + std::to_string(d) + "," +
                       format_double(traj.states(t, d)) + "\n";
    return out;
}

}  // namespace maxmi
