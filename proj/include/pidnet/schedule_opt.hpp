#pragma once

// Constrained minimization of terminal deformation over the intermediate
// profile point A = (t1, T1), with the surrogate in the loop and a final
// cure-sim verification of the winner.

#include <optional>
#include <string>
#include <vector>

#include "pidnet/cure_sim.hpp"
#include "pidnet/deeponet.hpp"

namespace pidnet {

struct OptProblem {
  ProfileAnchors anchors;
  double margin = kDefaultMargin;
  double doc_min = 0.990;
  double doc0 = 0.3;
  int n_t = 50;
  int n_T = 50;
  int refine_rounds = 2;
  int refine_points = 5;
  int workers = 1;
  // used only by the verification pass
  KineticsParams kinetics;
  DeformationParams deformation;
  SimSettings sim;

  /// Throws ConfigError unless doc_min in (0,1] and the grid is at least 2 x 2.
  void validate() const;
};

struct ConstraintCheck {
  std::string name;
  double margin;  // >= 0 (or > 0 for strict constraints) when satisfied
  bool satisfied;
};

struct Feasibility {
  bool feasible = false;
  double doc_final = 0.0;    // NaN when the candidate is outside the bounds
  double deformation = 0.0;  // mm, signed
  std::vector<ConstraintCheck> constraints;

  double objective() const;  // |deformation|
};

/// Bounds, slope ordering m1 > m2 > 0 and the terminal DoC constraint.
Feasibility feasible(double t1, double T1, const FilmDeepOnet& model, const OptProblem& problem);

/// The same report from a given terminal DoC / deformation (no surrogate).
Feasibility check_constraints(double t1, double T1, double doc_final, double deformation, const OptProblem& problem);

struct MapCell {
  double t1;
  double T1;
  Feasibility result;
};

struct Verification {
  double doc_final = 0.0;
  double deformation = 0.0;
  bool feasible = false;
};

struct OptResult {
  bool found = false;
  double t1 = 0.0;
  double T1 = 0.0;
  double objective = 0.0;
  Feasibility at_optimum;
  double grid_t1 = 0.0;  // best grid cell before refinement
  double grid_T1 = 0.0;
  double uncertainty_t1 = 0.0;
  double uncertainty_T1 = 0.0;
  std::vector<MapCell> map;
  std::optional<Verification> verification;
  std::vector<std::string> warnings;
};

/// Exhaustive grid search through the surrogate plus local refinement.
/// Throws ConfigError when problem.doc0 lies outside the model's training range.
OptResult optimize(const FilmDeepOnet& model, const OptProblem& problem);

/// true when (a_obj, a_t1, a_T1) beats (b_obj, b_t1, b_T1): smaller objective,
/// then smaller t1, then smaller T1.
bool better_candidate(double a_obj, double a_t1, double a_T1, double b_obj, double b_t1, double b_T1);

}  // namespace pidnet
