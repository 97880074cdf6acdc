#pragma once

// On-disk formats: CSV trajectories and histories, JSON manifests, versioned
// model files, ensemble directories and EKI checkpoints.

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pidnet/cure_sim.hpp"
#include "pidnet/deeponet.hpp"
#include "pidnet/eki.hpp"
#include "pidnet/schedule_opt.hpp"
#include "pidnet/train.hpp"
#include "pidnet/transfer.hpp"

namespace pidnet {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kModelFormatVersion = 1;
inline constexpr const char* kTrajectoryHeader = "time_min,temp_C,doc,log_visc_lnPaS,deformation_mm";

/// Shortest round-trip decimal form ('.' separator regardless of locale).
std::string format_double(double v);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  /// Index of a named column; throws DataError when absent.
  std::size_t column(const std::string& name) const;
};

/// Numeric CSV with one header line. Throws DataError with the line number on malformed rows.
CsvTable read_csv(const fs::path& path);
void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);
json read_json(const fs::path& path);
/// Pretty-printed with a trailing newline.
void write_json(const fs::path& path, const json& j);

// Trajectories
void write_trajectory_csv(const fs::path& path, const CureTrajectory& traj);
CureTrajectory read_trajectory_csv(const fs::path& path, double doc0);

// Datasets: <dir>/manifest.json plus <dir>/records/record_NNNN.csv
json dataset_manifest(const Dataset& ds);
void write_dataset(const fs::path& dir, const Dataset& ds);
Dataset read_dataset(const fs::path& dir);

json to_json(const ProfileAnchors& a);
json to_json(const KineticsParams& k);
json to_json(const DeformationParams& d);
json to_json(const SimSettings& s);
json to_json(const Architecture& a);

// Models
json model_to_json(const FilmDeepOnet& m);
FilmDeepOnet model_from_json(const json& j);
void write_model(const fs::path& path, const FilmDeepOnet& m);
FilmDeepOnet read_model(const fs::path& path);

void write_history_csv(const fs::path& path, const std::vector<HistoryRow>& rows);
void write_misfit_csv(const fs::path& path, const std::vector<MisfitRow>& rows);

// Seed ensembles: <dir>/manifest.json plus <dir>/member_NN.json
void write_ensemble(const fs::path& dir, const std::vector<EnsembleMember>& members);
std::vector<FilmDeepOnet> read_ensemble(const fs::path& dir);

// Experiments: CSV (time_min,temp_C) plus JSON sidecar (terminal_deformation_mm, doc0, label[, duration_min])
ExperimentRecord read_experiment(const fs::path& csv, const fs::path& sidecar);
void write_experiment(const fs::path& csv, const fs::path& sidecar, const ExperimentRecord& rec);

// EKI checkpoints: <dir>/manifest.json, <dir>/template.json, <dir>/particles/particle_NNNN.json
void write_eki_checkpoint(const fs::path& dir, const FilmDeepOnet& model_template, const EkiEnsemble& ens);
struct EkiCheckpoint {
  FilmDeepOnet model_template;
  EkiEnsemble ensemble;
};
EkiCheckpoint read_eki_checkpoint(const fs::path& dir);

// Plot-ready outputs
void write_prediction_csv(const fs::path& path, const Prediction& pred, const std::vector<double>& temperature);
void write_bands_csv(const fs::path& path, const EnsembleStats& stats);
/// Long format: particle,time_min,doc,log_visc_lnPaS,deformation_mm.
void write_particles_csv(const fs::path& path, const std::vector<double>& times,
                         const std::array<MatrixXd, kChannels>& particles);
void write_feasibility_csv(const fs::path& path, const std::vector<MapCell>& map);
json opt_result_json(const OptResult& r);

}  // namespace pidnet
