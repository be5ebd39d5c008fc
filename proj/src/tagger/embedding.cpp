#include "sift/tagger/embedding.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <set>
#include <string>

#include "sift/errors.hpp"

namespace sift::tagger {

std::size_t FieldSpec::width() const {
  if (kind == FieldKind::Numeric) return 1;
  return mode == FieldMode::Learned ? dim : cardinality;
}

std::size_t EmbeddingConfig::width() const {
  std::size_t w = 0;
  for (const auto& f : fields) w += f.width();
  return w;
}

EmbeddingConfig EmbeddingConfig::for_dataset(std::size_t num_event_types, std::span<const Trace> traces,
                                             FieldMode type_mode, std::size_t dim) {
  EmbeddingConfig cfg;
  FieldSpec type;
  type.name = "type";
  type.kind = FieldKind::EventType;
  type.mode = type_mode;
  type.dim = type_mode == FieldMode::Learned ? dim : 0;
  type.cardinality = num_event_types;
  cfg.fields.push_back(type);

  std::vector<std::string> order;
  std::map<std::string, std::set<std::string>> values;
  std::map<std::string, std::pair<double, double>> ranges;
  for (const auto& t : traces)
    for (const auto& e : t.events)
      for (const auto& attr : e.attrs) {
        if (std::find(order.begin(), order.end(), attr.name) == order.end()) order.push_back(attr.name);
        if (const auto* s = std::get_if<std::string>(&attr.value)) {
          values[attr.name].insert(*s);
        } else {
          const double v = std::get<double>(attr.value);
          auto [it, fresh] = ranges.try_emplace(attr.name, v, v);
          if (!fresh) {
            it->second.first = std::min(it->second.first, v);
            it->second.second = std::max(it->second.second, v);
          }
        }
      }
  for (const auto& name : order) {
    FieldSpec f;
    f.name = name;
    if (auto it = values.find(name); it != values.end()) {
      f.kind = FieldKind::Categorical;
      f.mode = FieldMode::OneHot;
      f.categories.assign(it->second.begin(), it->second.end());
      f.cardinality = f.categories.size();
    } else {
      f.kind = FieldKind::Numeric;
      f.min = ranges[name].first;
      f.max = ranges[name].second;
    }
    cfg.fields.push_back(std::move(f));
  }
  return cfg;
}

EncodedEvent encode(const EmbeddingConfig& cfg, const Event& e) {
  EncodedEvent out;
  for (const auto& f : cfg.fields) {
    switch (f.kind) {
      case FieldKind::EventType:
        if (e.type.value >= f.cardinality)
          throw ContractError("event type id " + std::to_string(e.type.value) + " outside the tagger's universe");
        out.categories.push_back(e.type.value);
        break;
      case FieldKind::Categorical: {
        std::uint32_t id = kUnknownCategory;
        for (const auto& attr : e.attrs)
          if (attr.name == f.name)
            if (const auto* s = std::get_if<std::string>(&attr.value)) {
              auto it = std::lower_bound(f.categories.begin(), f.categories.end(), *s);
              if (it != f.categories.end() && *it == *s) id = static_cast<std::uint32_t>(it - f.categories.begin());
            }
        out.categories.push_back(id);
        break;
      }
      case FieldKind::Numeric: {
        double v = 0.0;
        for (const auto& attr : e.attrs)
          if (attr.name == f.name)
            if (const auto* d = std::get_if<double>(&attr.value)) {
              const double span = f.max - f.min;
              v = span > 0 ? (*d - f.min) / span : 0.0;
              v = std::clamp(v, 0.0, 1.0);
            }
        out.numbers.push_back(v);
        break;
      }
    }
  }
  return out;
}

}  // namespace sift::tagger
