#pragma once

// Evaluation-only access to hidden task labels. Learners must not include this.

#include "dualls/sample.hpp"

namespace dualls::audit {

inline TaskTag make_tag(int task_id) { return TaskTag(task_id); }
inline int task_id(const TaskTag& tag) { return tag.id_; }
inline int task_id(const Sample& sample) { return task_id(sample.tag); }

}  // namespace dualls::audit
