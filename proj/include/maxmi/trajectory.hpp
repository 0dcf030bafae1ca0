#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maxmi/common.hpp"

namespace maxmi {

struct EventMark {
    std::string label;
    int index = 0;
};

/// One demonstration: a T_i x Q state matrix, optional T_i x A actions,
/// optional ground-truth event marks. Immutable after construction.
struct Trajectory {
    std::string id;
    Mat states;                     // T_i x Q
    std::optional<Mat> actions;     // T_i x A
    std::vector<EventMark> event_marks;

    int length() const { return static_cast<int>(states.rows()); }
    int state_dim() const { return static_cast<int>(states.cols()); }
    int action_dim() const { return actions ? static_cast<int>(actions->cols()) : 0; }

    /// Checks the type invariants; throws Error with the trajectory id.
    void validate() const;

    std::optional<int> mark_index(const std::string& label) const;
};

struct Dataset {
    std::vector<Trajectory> trajectories;

    int size() const { return static_cast<int>(trajectories.size()); }
    int state_dim() const { return trajectories.empty() ? 0 : trajectories.front().state_dim(); }
    int action_dim() const { return trajectories.empty() ? 0 : trajectories.front().action_dim(); }

    void validate() const;
};

/// All trajectories resampled to a common length T by per-dimension linear
/// interpolation. raw_lengths pins the piecewise-linear index map back to
/// raw time (endpoints map exactly).
struct NormalizedDataset {
    std::vector<Mat> states;        // N matrices, each T x Q
    std::vector<std::string> ids;
    std::vector<int> raw_lengths;
    int T = 0;

    int size() const { return static_cast<int>(states.size()); }
    int state_dim() const { return states.empty() ? 0 : static_cast<int>(states.front().cols()); }

    /// Raw (real-valued) index corresponding to a normalized index of
    /// trajectory i.
    double to_raw(int i, double normalized_index) const;
};

NormalizedDataset normalize(const Dataset& dataset, int T);

/// Inverse of the normalization grid: real raw index for a normalized one.
double map_index(double normalized_index, int raw_length, int T);

/// Normalized positions of a trajectory's event marks at resolution T.
std::vector<std::pair<std::string, double>> normalized_marks(const Trajectory& traj, int T);

// Dataset file format (versioned, plain text):
//   MAXMI-DS v1 N=<n> Q=<q> A=<a>
//   # key=value                      (optional metadata comment lines)
//   TRAJ <id> T=<t> MARKS=<m>
//   MARK <label> <index>             (m lines)
//   <q+a space-separated floats>     (t lines)
// Floats are written with full round-trip precision; identical datasets
// serialize to identical bytes.
struct DatasetFile {
    Dataset dataset;
    std::map<std::string, std::string> metadata;
};

DatasetFile load_dataset_file(const std::string& path);
Dataset load_dataset(const std::string& path);
void save_dataset(const Dataset& dataset, const std::string& path,
                  const std::map<std::string, std::string>& metadata = {});
std::string serialize_dataset(const Dataset& dataset,
                              const std::map<std::string, std::string>& metadata = {});

/// CSV export for plotting: trajectory_id,time,dim,value rows.
std::string dataset_to_csv(const Dataset& dataset);

}  // namespace maxmi
