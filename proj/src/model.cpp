#include "deepsets/model.hpp"

#include <stdexcept>
#include <string>

namespace deepsets {

namespace {

constexpr const char* kFormat = "deepsets-model/1";

nlohmann::json dense_descriptor(const DenseLayer& l) {
  return {{"in", l.in_width()}, {"out", l.out_width()}, {"activation", std::string(to_string(l.activation))}};
}

DenseLayer dense_shell(const nlohmann::json& d) {
  const auto in = d.at("in").get<Index>();
  const auto out = d.at("out").get<Index>();
  if (in <= 0 || out <= 0) throw std::invalid_argument("model: layer widths must be positive");
  return DenseLayer{Tensor::Zero(in, out), Tensor::Zero(1, out),
                    activation_from_string(d.at("activation").get<std::string>())};
}

}  // namespace

std::vector<Tensor*> parameters(SetModel& model) {
  return std::visit([](auto& m) { return m.parameters(); }, model);
}

std::vector<const Tensor*> parameters(const SetModel& model) {
  return std::visit([](const auto& m) { return m.parameters(); }, model);
}

std::size_t parameter_count(const SetModel& model) {
  return std::visit([](const auto& m) { return m.parameter_count(); }, model);
}

ModelGraph forward(const SetModel& model, Tape& tape, const SetBatch& batch) {
  return std::visit([&](const auto& m) { return m.forward(tape, batch); }, model);
}

nlohmann::json model_to_json(const SetModel& model, TaskKind task) {
  nlohmann::json arch;
  if (const auto* inv = std::get_if<InvariantModel>(&model)) {
    arch["kind"] = "invariant";
    arch["pool"] = std::string(to_string(inv->pool()));
    arch["condition_mode"] = std::string(to_string(inv->condition_mode()));
    arch["condition_width"] = inv->condition_width();
    arch["phi"] = nlohmann::json::array();
    for (const auto& l : inv->phi()) arch["phi"].push_back(dense_descriptor(l));
    arch["rho"] = nlohmann::json::array();
    for (const auto& l : inv->rho()) arch["rho"].push_back(dense_descriptor(l));
  } else {
    const auto& stack = std::get<EquivariantStack>(model);
    arch["kind"] = "equivariant";
    arch["layers"] = nlohmann::json::array();
    for (const auto& l : stack.layers()) {
      arch["layers"].push_back({{"variant", std::string(to_string(l.variant))},
                                {"in", l.in_width()},
                                {"out", l.out_width()},
                                {"activation", std::string(to_string(l.activation))}});
    }
  }

  nlohmann::json params = nlohmann::json::array();
  for (const Tensor* p : parameters(model)) {
    params.push_back(std::vector<double>(p->data(), p->data() + p->size()));
  }
  return {{"format", kFormat}, {"task", std::string(to_string(task))}, {"architecture", arch}, {"parameters", params}};
}

LoadedModel model_from_json(const nlohmann::json& doc) {
  if (doc.value("format", std::string()) != kFormat) throw std::invalid_argument("model: unrecognized format");
  const auto& arch = doc.at("architecture");
  const std::string kind = arch.at("kind").get<std::string>();

  LoadedModel loaded;
  loaded.task = task_from_string(doc.at("task").get<std::string>());
  if (kind == "invariant") {
    std::vector<DenseLayer> phi;
    std::vector<DenseLayer> rho;
    for (const auto& d : arch.at("phi")) phi.push_back(dense_shell(d));
    for (const auto& d : arch.at("rho")) rho.push_back(dense_shell(d));
    loaded.model = InvariantModel(std::move(phi), pool_from_string(arch.at("pool").get<std::string>()), std::move(rho),
                                  condition_mode_from_string(arch.value("condition_mode", std::string("none"))),
                                  arch.value("condition_width", Index{0}));
  } else if (kind == "equivariant") {
    std::vector<EquivariantLayer> layers;
    for (const auto& d : arch.at("layers")) {
      EquivariantLayer l;
      l.variant = equivariant_variant_from_string(d.at("variant").get<std::string>());
      const auto in = d.at("in").get<Index>();
      const auto out = d.at("out").get<Index>();
      if (in <= 0 || out <= 0) throw std::invalid_argument("model: layer widths must be positive");
      if (l.variant != EquivariantVariant::kMaxpoolNormalized) l.lambda = Tensor::Zero(in, out);
      l.gamma = Tensor::Zero(in, out);
      l.beta = Tensor::Zero(1, out);
      l.activation = activation_from_string(d.at("activation").get<std::string>());
      layers.push_back(std::move(l));
    }
    loaded.model = EquivariantStack(std::move(layers));
  } else {
    throw std::invalid_argument("model: unknown architecture kind " + kind);
  }

  const auto& params = doc.at("parameters");
  auto slots = parameters(loaded.model);
  if (params.size() != slots.size()) throw std::invalid_argument("model: parameter count does not match architecture");
  for (std::size_t i = 0; i < slots.size(); ++i) {
    const auto values = params[i].get<std::vector<double>>();
    if (static_cast<Index>(values.size()) != slots[i]->size()) {
      throw std::invalid_argument("model: parameter " + std::to_string(i) + " has the wrong size");
    }
    std::copy(values.begin(), values.end(), slots[i]->data());
  }
  return loaded;
}

void save_model(const std::filesystem::path& path, const SetModel& model, TaskKind task) {
  write_text_file(path, model_to_json(model, task).dump(1) + "\n");
}

LoadedModel load_model(const std::filesystem::path& path) {
  return model_from_json(nlohmann::json::parse(read_text_file(path)));
}

}  // namespace deepsets
