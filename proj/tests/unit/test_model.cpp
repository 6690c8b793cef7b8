#include "deepsets/model.hpp"
#include "deepsets/train.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>

using namespace deepsets;

namespace {

// Bitwise comparison: EXPECT_EQ on doubles would accept -0 == +0.
bool same_bits(const std::vector<const Tensor*>& a, const std::vector<const Tensor*>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols()) return false;
    if (std::memcmp(a[i]->data(), b[i]->data(), sizeof(double) * static_cast<std::size_t>(a[i]->size())) != 0) {
      return false;
    }
  }
  return true;
}

SetModel invariant_model() {
  TrainConfig c = TrainConfig::defaults(TaskKind::kDigitSum);
  c.architecture.pool = Pool::kMax;
  c.architecture.phi_activation = Activation::kElu;
  c.seed = 4;
  return build_model(c, 10);
}

SetModel equivariant_model() {
  TrainConfig c = TrainConfig::defaults(TaskKind::kOutlier);
  c.seed = 5;
  return build_model(c, 8);
}

}  // namespace

TEST(ModelJson, InvariantRoundTripIsBitExact) {
  const SetModel m = invariant_model();
  const auto doc = model_to_json(m, TaskKind::kDigitSum);
  EXPECT_EQ(doc.at("format"), "deepsets-model/1");
  const LoadedModel back = model_from_json(nlohmann::json::parse(doc.dump()));
  EXPECT_EQ(back.task, TaskKind::kDigitSum);
  ASSERT_TRUE(std::holds_alternative<InvariantModel>(back.model));
  EXPECT_EQ(std::get<InvariantModel>(back.model).pool(), Pool::kMax);
  EXPECT_TRUE(same_bits(parameters(m), parameters(back.model)));
  EXPECT_EQ(model_to_json(back.model, back.task).dump(), doc.dump());
}

TEST(ModelJson, EquivariantRoundTripThroughFile) {
  const SetModel m = equivariant_model();
  const auto path = std::filesystem::temp_directory_path() / "deepsets_test_model.json";
  save_model(path, m, TaskKind::kOutlier);
  const LoadedModel back = load_model(path);
  std::filesystem::remove(path);
  ASSERT_TRUE(std::holds_alternative<EquivariantStack>(back.model));
  EXPECT_EQ(back.task, TaskKind::kOutlier);
  EXPECT_TRUE(same_bits(parameters(m), parameters(back.model)));

  const auto& a = std::get<EquivariantStack>(m);
  const auto& b = std::get<EquivariantStack>(back.model);
  ASSERT_EQ(a.layers().size(), b.layers().size());
  for (std::size_t i = 0; i < a.layers().size(); ++i) {
    EXPECT_EQ(a.layers()[i].variant, b.layers()[i].variant);
    EXPECT_EQ(a.layers()[i].activation, b.layers()[i].activation);
  }
}

TEST(ModelJson, AwkwardValuesSurvive) {
  SetModel m = invariant_model();
  auto params = parameters(m);
  (*params[0])(0, 0) = -0.0;
  (*params[0])(0, 1) = 4.9406564584124654e-324;
  (*params[0])(0, 2) = 0.1 + 0.2;
  (*params[0])(1, 0) = -1.7976931348623157e308;
  const LoadedModel back = model_from_json(nlohmann::json::parse(model_to_json(m, TaskKind::kDigitSum).dump()));
  EXPECT_TRUE(same_bits(parameters(std::as_const(m)), parameters(back.model)));
}

TEST(ModelJson, ParameterCountsAgree) {
  const SetModel m = equivariant_model();
  std::size_t total = 0;
  for (const Tensor* t : parameters(m)) total += static_cast<std::size_t>(t->size());
  EXPECT_EQ(parameter_count(m), total);
}

TEST(ModelJson, MalformedDocumentsThrow) {
  const auto good = model_to_json(invariant_model(), TaskKind::kDigitSum);

  auto bad = good;
  bad["format"] = "something-else";
  EXPECT_THROW(model_from_json(bad), std::invalid_argument);

  bad = good;
  bad["parameters"].erase(bad["parameters"].size() - 1);
  EXPECT_THROW(model_from_json(bad), std::invalid_argument);

  bad = good;
  bad["parameters"][0].erase(0);
  EXPECT_THROW(model_from_json(bad), std::invalid_argument);

  bad = good;
  bad["architecture"]["kind"] = "transformer";
  EXPECT_THROW(model_from_json(bad), std::invalid_argument);

  EXPECT_ANY_THROW(load_model("/nonexistent/dir/model.json"));
}

TEST(ModelForward, DispatchesOnTheVariant) {
  const SetModel inv = invariant_model();
  const SetModel eq = equivariant_model();
  const auto digits = gen_digit_sum(3, 5, 0, 1);
  const auto outliers = gen_outlier_sets(3, 16, 8, 4.0, 1);
  {
    Tape tape;
    const auto g = forward(inv, tape, SetBatch::from_sets(digits.sets));
    EXPECT_EQ(g.output.rows(), 3);
    EXPECT_EQ(g.output.cols(), 1);
    EXPECT_EQ(g.parameters.size(), parameters(inv).size());
  }
  {
    Tape tape;
    const auto g = forward(eq, tape, SetBatch::from_sets(outliers.sets));
    EXPECT_EQ(g.output.rows(), 48);
    EXPECT_EQ(g.output.cols(), 1);
  }
}
