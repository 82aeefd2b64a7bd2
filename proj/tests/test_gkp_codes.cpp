#include <gtest/gtest.h>

#include "gkp/gkp_codes.hpp"
#include "gkp/reference_values.hpp"

using namespace gkp;

namespace {

const CodewordSet& paper_codewords() {
  static const CodewordSet set = synthesize_codewords(reference::codeword_fock, {1.0, reference::codeword_ratio});
  return set;
}

}  // namespace

TEST(Lattice, Geometry) {
  GkpLattice lat;
  EXPECT_NEAR(lat.ell_s, 2.50663, 1e-5);
  EXPECT_EQ(lat.beta, I * lat.alpha);
  // (2a)(2b)* - c.c. = -4 pi i
  const cplx comm = lat.stabilizer_x() * std::conj(lat.stabilizer_z()) - std::conj(lat.stabilizer_x()) * lat.stabilizer_z();
  EXPECT_NEAR(std::abs(comm), 4.0 * pi, 1e-12);
}

TEST(GridHamiltonian, ZeroCouplingIsNumberOperator) {
  HilbertConfig cfg{12, 1, false};
  const Operator h = build_grid_hamiltonian(cfg, {2.0, 0.0});
  EXPECT_LT(max_abs(h - 2.0 * number(12)), 1e-14);
  Eigen::SelfAdjointEigenSolver<Operator> es(h);
  EXPECT_NEAR(std::abs(es.eigenvectors()(0, 0)), 1.0, 1e-12);
}

TEST(GridHamiltonian, HermitianAndRejectsBadConfigs) {
  const Operator h = build_grid_hamiltonian({30, 1, false}, {1.0, 5.95});
  EXPECT_LT(hermiticity_residual(h), 1e-12);
  EXPECT_THROW(build_grid_hamiltonian({10, 2, false}, {1.0, 1.0}), ValidationError);
  EXPECT_THROW(build_grid_hamiltonian({10, 1, true}, {1.0, 1.0}), ValidationError);
}

TEST(GridHamiltonian, QuasiDegenerateGroundPair) {
  EXPECT_GE(paper_codewords().diagnostics.gap_ratio, 5.0);
  Eigen::SelfAdjointEigenSolver<Operator> es(build_grid_hamiltonian({50, 1, false}, {1.0, 5.95}));
  const auto& w = es.eigenvalues();
  EXPECT_GE(w(2) - w(1), 5.0 * (w(1) - w(0)));
}

TEST(Codewords, ReferenceSqueezing) {
  const auto& set = paper_codewords();
  for (std::size_t k = 0; k < reference::codeword_squeezing_labels.size(); ++k) {
    const auto sq = set.squeezing_of(parse_logical(reference::codeword_squeezing_labels[k]));
    EXPECT_NEAR(sq.position_db(), reference::codeword_squeezing_db[k][0], reference::codeword_squeezing_tol_db)
        << reference::codeword_squeezing_labels[k];
    EXPECT_NEAR(sq.momentum_db(), reference::codeword_squeezing_db[k][1], reference::codeword_squeezing_tol_db)
        << reference::codeword_squeezing_labels[k];
  }
}

TEST(Codewords, NormalisedAndNearlyOrthogonal) {
  const auto& set = paper_codewords();
  for (Logical l : kAllLogical) EXPECT_NEAR(set[l].norm(), 1.0, 1e-9);
  EXPECT_LT(std::abs(set[Logical::PlusZ].dot(set[Logical::MinusZ])), 1e-3);
}

TEST(Codewords, HadamardRelationRecoversGroundPair) {
  const auto& set = paper_codewords();
  Eigen::SelfAdjointEigenSolver<Operator> es(build_grid_hamiltonian({50, 1, false}, {1.0, 5.95}));
  const double c = std::cos(pi / 8), s = std::sin(pi / 8);
  Ket ph = c * set[Logical::PlusZ] + s * set[Logical::MinusZ];
  Ket mh = -s * set[Logical::PlusZ] + c * set[Logical::MinusZ];
  const Operator ground = es.eigenvectors().leftCols(2);
  // Overlap with the ground eigenspace; either ordering of the pair is acceptable.
  EXPECT_GE((ground.adjoint() * ph).squaredNorm(), 1.0 - 1e-6);
  EXPECT_GE((ground.adjoint() * mh).squaredNorm(), 1.0 - 1e-6);
  EXPECT_GE(std::max(std::norm(ground.col(0).dot(ph)), std::norm(ground.col(1).dot(ph))), 1.0 - 1e-6);
}

TEST(Codewords, LogicalZSignFixesLabels) {
  const auto& set = paper_codewords();
  GkpLattice lat;
  const Operator z = displacement_closed_form(50, lat.beta);
  EXPECT_GT(expectation(set[Logical::PlusZ], z).real(), 0.8);
  EXPECT_LT(expectation(set[Logical::MinusZ], z).real(), -0.8);
  const Operator x = displacement_closed_form(50, lat.alpha);
  EXPECT_GT(expectation(set[Logical::PlusX], x).real(), 0.8);
  EXPECT_LT(expectation(set[Logical::MinusX], x).real(), -0.8);
}

TEST(Codewords, SqueezingGrowsWithCoupling) {
  double prev = -1e9;
  double prev_zl = -1.0;
  GkpLattice lat;
  for (double ratio : {2.0, 4.0, 5.95, 8.0}) {
    const auto set = synthesize_codewords(50, {1.0, ratio});
    const auto sq = set.squeezing_of(Logical::PlusZ);
    const double mean_db = 0.5 * (sq.position_db() + sq.momentum_db());
    EXPECT_GT(mean_db, prev) << ratio;
    prev = mean_db;
    const cplx zl = expectation(set[Logical::PlusZ], displacement_closed_form(50, cplx{0.0, lat.ell_s}));
    EXPECT_LT(std::abs(zl.imag()), 1e-9);
    EXPECT_GT(zl.real(), prev_zl);
    prev_zl = zl.real();
  }
}

TEST(Codewords, SmallTruncationFailsDiagnostic) {
  EXPECT_THROW(synthesize_codewords(6, {1.0, 5.95}), ConvergenceError);
  EXPECT_NO_THROW(synthesize_codewords(20, {1.0, 3.0}));
}

TEST(Squeezing, VacuumIsZeroDb) {
  Ket vac = Ket::Zero(30);
  vac(0) = 1.0;
  const auto sq = squeezing_from_stabilizers(vac);
  EXPECT_NEAR(sq.delta_from_sx, 1.0, 1e-12);
  EXPECT_NEAR(sq.delta_from_sz, 1.0, 1e-12);
  EXPECT_NEAR(sq.db_from_sx, 0.0, 1e-10);
}

TEST(Squeezing, DbDefinitionAndSentinels) {
  EXPECT_NEAR(delta_to_db(std::sqrt(0.1)), 10.0, 1e-12);
  EXPECT_TRUE(std::isinf(delta_to_db(std::numeric_limits<double>::infinity())));
  bool clamped = false;
  EXPECT_EQ(detail::envelope_delta(1.0 + 1e-12, clamped), 0.0);
  EXPECT_TRUE(clamped);
}

TEST(Labels, RoundTrip) {
  for (Logical l : kAllLogical) EXPECT_EQ(parse_logical(to_string(l)), l);
  EXPECT_THROW(parse_logical("+W"), ValidationError);
}
