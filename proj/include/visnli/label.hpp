#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace visnli {

enum class Task : std::uint8_t { ThreeWay, TwoWay };

// Entailment is shared by both tasks; Neutral/Contradiction only occur in
// three-way data and NonEntailment only in two-way data. A dataset never
// mixes the two sets (see belongs_to()).
enum class Label : std::uint8_t { Entailment, Neutral, Contradiction, NonEntailment };

std::string_view label_name(Label label);
std::string_view label_code(Label label);
std::string_view task_name(Task task);

std::optional<Label> try_parse_label(std::string_view text);
Label parse_label(std::string_view text);
Task parse_task(std::string_view text);

// Labels of a task, in canonical slot order (E, N, C) or (E, NonEnt).
std::span<const Label> task_labels(Task task);
bool belongs_to(Label label, Task task);
std::size_t slot_of(Label label, Task task);

// E -> 1, N -> 0, C -> -1. Throws DomainError for NonEntailment.
int label_value(Label label);

// Maps hypothesis scores (indexed by slot) to labels: highest score gets the
// first task label, lowest the last. Equal scores keep slot order.
std::vector<Label> labels_from_ranking(std::span<const double> scores, Task task);

}  // namespace visnli
