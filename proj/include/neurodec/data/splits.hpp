#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "neurodec/data/dataset.hpp"

namespace neurodec::data {

struct Split {
  std::vector<std::string> train_subjects;
  std::string test_subject;
};

struct LeaveOneOutPlan {
  std::vector<Split> rotations;  // one per non-validation subject
  Split validation;              // train on everyone else, test on the validation subject
  std::string validation_subject;
};

inline LeaveOneOutPlan leave_one_out_splits(const std::vector<std::string>& subjects,
                                            const std::string& validation_subject) {
  require(std::find(subjects.begin(), subjects.end(), validation_subject) != subjects.end(), ErrorKind::lookup,
          "validation subject '" + validation_subject + "' is not in the dataset");
  LeaveOneOutPlan plan;
  plan.validation_subject = validation_subject;
  for (const auto& test : subjects) {
    Split split{{}, test};
    for (const auto& s : subjects)
      if (s != test) split.train_subjects.push_back(s);
    if (test == validation_subject)
      plan.validation = std::move(split);
    else
      plan.rotations.push_back(std::move(split));
  }
  return plan;
}

inline LeaveOneOutPlan leave_one_out_splits(const Dataset& ds, const std::string& validation_subject) {
  return leave_one_out_splits(ds.subjects(), validation_subject);
}

template <class Pred>
std::vector<const Scan*> select_scans(const std::vector<Scan>& scans, Pred pred) {
  std::vector<const Scan*> out;
  for (const auto& s : scans)
    if (pred(s)) out.push_back(&s);
  return out;
}

inline std::vector<const Scan*> scans_of(const std::vector<Scan>& scans, const std::vector<std::string>& subjects) {
  return select_scans(scans, [&](const Scan& s) {
    return std::find(subjects.begin(), subjects.end(), s.subject_id) != subjects.end();
  });
}

}  // namespace neurodec::data
