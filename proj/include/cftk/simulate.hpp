#pragma once

// Seeded structural causal models standing in for the two benchmark datasets
// when the source CSVs are not at hand. Both share one exogenous factor A that
// drives the sensitive attribute and the target, next to a knowledge factor K
// that drives the features and the target.

#include <cstdint>
#include <string>
#include <vector>

#include "cftk/dataset.hpp"

namespace cftk {

// Law-school-like regression: race, UGPA, LSAT -> ZFYA.
Schema law_schema();
// Census-income-like classification: race, age, education_num,
// hours_per_week, workclass, marital_status -> income.
Schema adult_schema();

TabularDataset simulate_law(std::size_t n, std::uint64_t seed);
TabularDataset simulate_adult(std::size_t n, std::uint64_t seed);

// Dispatch on "law" / "adult"; anything else throws ContractError.
Schema simulator_schema(const std::string& name);
TabularDataset simulate(const std::string& name, std::size_t n, std::uint64_t seed);
std::vector<std::string> simulator_names();

}  // namespace cftk
