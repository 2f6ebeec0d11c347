#ifndef SMS_SMS_HPP
#define SMS_SMS_HPP

#include "sms/common.hpp"
#include "sms/model.hpp"
#include "sms/kinematics.hpp"
#include "sms/dynamics.hpp"
#include "sms/coupling.hpp"
#include "sms/planner.hpp"
#include "sms/control.hpp"

#endif // SMS_SMS_HPP
