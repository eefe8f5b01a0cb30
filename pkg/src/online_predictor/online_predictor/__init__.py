""" Online observation prediction for unknown linear systems, and a Kalman baseline. """
