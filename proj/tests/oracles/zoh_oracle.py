# Extended-precision ZOH discretization oracle for a scalar diagonal SSM entry
# with B = 1:  a_bar = exp(dt*A),  b_bar = (exp(dt*A) - 1) / A.
# Values printed here are frozen into tests/test_ssm.cpp.
import mpmath as mp

mp.mp.dps = 50

def zoh(dt, a):
    dt = mp.mpf(dt)
    a = mp.mpc(a)
    a_bar = mp.exp(dt * a)
    b_bar = (a_bar - 1) / a
    return a_bar, b_bar

for dt, a in [("0.1", mp.mpc("-0.5", mp.pi)), ("1", mp.mpc(-1, 0)), ("1e-8", mp.mpc(-1, 0))]:
    a_bar, b_bar = zoh(dt, a)
    print(dt, mp.nstr(a_bar.real, 20), mp.nstr(a_bar.imag, 20), mp.nstr(b_bar.real, 20), mp.nstr(b_bar.imag, 20))
